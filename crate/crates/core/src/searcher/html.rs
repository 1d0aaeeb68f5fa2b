use std::sync::LazyLock;

use regex::Regex;

static DROPPED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?is)<script\b.*?</script\s*>|<style\b.*?</style\s*>|<noscript\b.*?</noscript\s*>|<!--.*?-->|<(script|style)\b.*$",
    )
    .unwrap()
});
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static ENTITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"&(#[0-9]+|#[xX][0-9a-fA-F]+|[a-zA-Z]+);").unwrap());

fn decode_entity(name: &str) -> Option<String> {
    let c = match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        _ => {
            let num = name.strip_prefix('#')?;
            let code = match num.strip_prefix(['x', 'X']) {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => num.parse().ok()?,
            };
            char::from_u32(code)?
        }
    };
    Some(c.to_string())
}

/// Collapses runs of whitespace to single spaces and trims.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reduces an HTML document to readable text: scripts, styles and comments
/// are removed, tags become word breaks, entities are decoded.
pub fn html_to_text(html: &str) -> String {
    let stripped = DROPPED.replace_all(html, " ");
    let stripped = TAG.replace_all(&stripped, " ");
    let decoded = ENTITY.replace_all(&stripped, |caps: &regex::Captures<'_>| {
        decode_entity(&caps[1]).unwrap_or_else(|| caps[0].to_string())
    });
    collapse_whitespace(&decoded)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_removed_tags_split_words() {
        assert_eq!(html_to_text("<p>a</p><script>x</script><p>b</p>"), "a b");
    }

    #[test]
    fn styles_comments_and_entities() {
        let html = "<html><head><style>p{color:red}</style><title>T</title></head>\
                    <body><!-- hidden --><p>Fish &amp; chips&nbsp;&#8212; &#x41;</p></body></html>";
        assert_eq!(html_to_text(html), "T Fish & chips \u{2014} A");
    }

    #[test]
    fn unclosed_script_dropped_to_end() {
        assert_eq!(html_to_text("ok <SCRIPT>var a = 1;"), "ok");
    }

    #[test]
    fn unknown_entity_kept() {
        assert_eq!(html_to_text("a &bogus; b"), "a &bogus; b");
    }
}
