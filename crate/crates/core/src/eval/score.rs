use crate::backends::{ChatMessage, GenParams, LlmBackend};
use crate::templates::{self, TemplateSet};

/// Lowercase, drop punctuation, collapse whitespace, then drop one leading
/// article.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let collapsed = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = collapsed.strip_prefix(article) {
            return rest.to_string();
        }
    }
    collapsed
}

/// True iff the normalized prediction equals some normalized gold answer.
/// An empty prediction never matches.
pub fn exact_match(prediction: &str, gold_answers: &[String]) -> bool {
    let pred = normalize_answer(prediction);
    !pred.is_empty() && gold_answers.iter().any(|g| normalize_answer(g) == pred)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeVerdict {
    pub correct: bool,
    pub warning: Option<String>,
}

fn first_token_verdict(reply: &str) -> Option<bool> {
    let token = reply.split_whitespace().next()?;
    let token = token.trim_matches(|c: char| !c.is_alphanumeric());
    match token.to_ascii_uppercase().as_str() {
        "CORRECT" => Some(true),
        "INCORRECT" => Some(false),
        _ => None,
    }
}

/// Asks the model for a CORRECT/INCORRECT verdict, retrying once on a
/// malformed reply and otherwise defaulting to incorrect.
pub async fn llm_judge(
    question: &str,
    prediction: &str,
    gold_answers: &[String],
    llm: &dyn LlmBackend,
    templates: &TemplateSet,
) -> JudgeVerdict {
    let gold = gold_answers.join(" | ");
    let messages = [
        ChatMessage::system(templates.render(
            templates::JUDGE_SYSTEM,
            &[("question", question), ("prediction", prediction), ("gold", &gold)],
        )),
        ChatMessage::user("Grade the predicted answer."),
    ];
    let mut last = String::new();
    for _ in 0..2 {
        match llm.generate(&messages, &GenParams::default()).await {
            Ok(c) => {
                if let Some(v) = first_token_verdict(&c.text) {
                    return JudgeVerdict {
                        correct: v,
                        warning: None,
                    };
                }
                last = format!("malformed judge reply: {:?}", c.text.chars().take(80).collect::<String>());
            }
            Err(e) => last = format!("judge call failed: {e}"),
        }
    }
    JudgeVerdict {
        correct: false,
        warning: Some(format!("{last}; counted as incorrect")),
    }
}
