use indexmap::IndexMap;
use url::Url;

use super::SearchHit;

/// Canonical form used to merge hits.
///
/// Lowercases scheme and host, drops the default port and the fragment, and
/// strips trailing slashes from the path. Query strings are left alone.
pub fn normalize_url(raw: &str) -> String {
    let raw = raw.trim();
    match Url::parse(raw) {
        Ok(u) if u.host_str().is_some() => {
            let mut out = format!("{}://{}", u.scheme(), u.host_str().unwrap_or_default());
            if let Some(port) = u.port() {
                out.push_str(&format!(":{port}"));
            }
            out.push_str(u.path().trim_end_matches('/'));
            if let Some(q) = u.query() {
                out.push('?');
                out.push_str(q);
            }
            out
        }
        _ => {
            let no_frag = raw.split('#').next().unwrap_or_default();
            match no_frag.split_once('?') {
                Some((path, q)) => format!("{}?{q}", path.trim_end_matches('/')),
                None => no_frag.trim_end_matches('/').to_string(),
            }
        }
    }
}

/// Merges per-(query, engine) hit lists by normalized URL.
///
/// Duplicates keep the lexicographically smallest title and the smallest
/// rank; summary and engine come from the first occurrence. Output is ordered
/// by (rank, url) and capped at `cap`.
pub fn merge_hits(lists: &[Vec<SearchHit>], cap: usize) -> Vec<SearchHit> {
    let mut merged: IndexMap<String, SearchHit> = IndexMap::new();
    for hit in lists.iter().flatten() {
        let url = normalize_url(&hit.url);
        match merged.get_mut(&url) {
            Some(acc) => {
                acc.rank = acc.rank.min(hit.rank);
                if hit.title < acc.title {
                    acc.title = hit.title.clone();
                }
            }
            None => {
                merged.insert(
                    url.clone(),
                    SearchHit {
                        url,
                        ..hit.clone()
                    },
                );
            }
        }
    }
    let mut out: Vec<SearchHit> = merged.into_values().collect();
    out.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.url.cmp(&b.url)));
    out.truncate(cap);
    out
}
