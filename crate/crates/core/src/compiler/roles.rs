use super::{Role, TranscriptSentence};
use crate::gateway::{ContextId, Gateway, GatewayError};

pub const ROLE_PROMPT_HEAD: &str =
    "Using the taxonomy below, classify the sentence from a how-to video transcript into exactly one of eight categories:";

const TAXONOMY: &str = r#"[Greeting, Overview, Method, Supplementary, Explanation, Description, Conclusion, Miscellaneous].
Answer with the category name only. Do not answer with a sub-category.

1. Greeting
   Opening: remarks that start the video or introduce the instructor or channel.
   Closing: parting remarks that wrap up the video.
2. Overview
   Goal: what the video sets out to make or achieve.
   Motivation: why the video was made; background for the task.
   Briefing: a rundown of how the goal will be reached.
3. Method
   Subgoal: the objective of the next section of the task.
   Instruction: an action the instructor performs to complete the task.
   Tool: introduces materials, ingredients or equipment that will be used.
4. Supplementary
   Tip: extra information that makes an instruction easier, faster or better.
   Warning: something that should be avoided.
5. Explanation
   Justification: why an instruction is performed.
   Effect: what an instruction leads to.
6. Description
   Status: the current state of the object being worked on.
   Context: the method or the setting.
   Tool Specification: details about tools and equipment.
7. Conclusion
   Outcome: the final result of the procedure.
   Reflection: a summary, evaluation or suggestion for next time.
8. Miscellaneous
   Side Note: personal stories, jokes, audience engagement and advertisements.
   Self-promotion: likes, subscriptions, notifications or donations for the channel.
   Bridge: phrases that only connect sections.
   Filler: conventional filler words.

EXAMPLES:
Sentence: Welcome back to my kitchen, I'm Sam.
Category: Greeting

Sentence: Today we're baking a simple loaf of banana bread.
Category: Overview

Sentence: Pour the batter into the loaf pan.
Category: Method

Sentence: Don't open the oven door while it bakes.
Category: Supplementary
"#;

pub fn role_prompt(sentence: &str) -> String {
    format!(
        "{ROLE_PROMPT_HEAD} {TAXONOMY}\nSentence: {}\nCategory:",
        sentence.trim()
    )
}

const SUBCATEGORIES: &[(&str, Role)] = &[
    ("opening", Role::Greeting),
    ("closing", Role::Greeting),
    ("goal", Role::Overview),
    ("motivation", Role::Overview),
    ("briefing", Role::Overview),
    ("subgoal", Role::Method),
    ("instruction", Role::Method),
    ("tool", Role::Method),
    ("tip", Role::Supplementary),
    ("warning", Role::Supplementary),
    ("justification", Role::Explanation),
    ("effect", Role::Explanation),
    ("status", Role::Description),
    ("context", Role::Description),
    ("tool specification", Role::Description),
    ("outcome", Role::Conclusion),
    ("reflection", Role::Conclusion),
    ("side note", Role::Miscellaneous),
    ("self-promotion", Role::Miscellaneous),
    ("bridge", Role::Miscellaneous),
    ("filler", Role::Miscellaneous),
];

/// Maps a model reply onto the taxonomy. Sub-category names fold into their
/// parent; anything else is `None`.
pub fn parse_role(reply: &str) -> Option<Role> {
    let mut label = reply.trim();
    if let Some(idx) = label.to_ascii_lowercase().rfind("category:") {
        label = &label[idx + "category:".len()..];
    }
    let label = label
        .lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("")
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric() && c != '-' && c != ' ')
        .trim()
        .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ' ')
        .to_ascii_lowercase();
    if let Some(role) = Role::ALL.iter().find(|r| r.as_str().eq_ignore_ascii_case(&label)) {
        return Some(*role);
    }
    SUBCATEGORIES
        .iter()
        .find(|(name, _)| *name == label)
        .map(|(_, role)| *role)
}

/// Labels every sentence with one batch call each. Labels outside the
/// taxonomy become `Miscellaneous`.
pub fn classify_roles(
    gateway: &Gateway,
    sentences: &[TranscriptSentence],
) -> Result<Vec<TranscriptSentence>, GatewayError> {
    let ctx = ContextId::new("compile-roles");
    sentences
        .iter()
        .map(|s| {
            let reply = gateway.complete_text(role_prompt(&s.text), &[], &ctx)?;
            let role = parse_role(&reply).unwrap_or_else(|| {
                tracing::warn!(sentence = %s.text, %reply, "role outside taxonomy, using Miscellaneous");
                Role::Miscellaneous
            });
            Ok(TranscriptSentence {
                role: Some(role),
                ..s.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{FixtureValue, Fixtures, MockBackend, ModelRequest};

    #[test]
    fn parses_labels_leniently() {
        assert_eq!(parse_role("Method"), Some(Role::Method));
        assert_eq!(parse_role("Category: greeting."), Some(Role::Greeting));
        assert_eq!(parse_role("**Supplementary**"), Some(Role::Supplementary));
        assert_eq!(parse_role("Self-promotion"), Some(Role::Miscellaneous));
        assert_eq!(parse_role("8. Miscellaneous"), Some(Role::Miscellaneous));
        assert_eq!(parse_role("Recipe"), None);
    }

    fn sentence(text: &str) -> TranscriptSentence {
        TranscriptSentence {
            id: 0,
            text: text.into(),
            start: 0.0,
            end: 1.0,
            role: None,
        }
    }

    #[test]
    fn adversarial_labels_are_coerced_into_the_taxonomy() {
        let mut fx = Fixtures::default();
        for (text, reply) in [("a.", "banana"), ("b.", ""), ("c.", "Method")] {
            fx.insert(
                &ModelRequest::batch(role_prompt(text)),
                FixtureValue::Text(reply.into()),
            );
        }
        let gw = Gateway::new(Arc::new(MockBackend::new(fx).strict(true)));
        let out = classify_roles(&gw, &[sentence("a."), sentence("b."), sentence("c.")]).unwrap();
        let roles: Vec<_> = out.iter().map(|s| s.role.unwrap()).collect();
        assert_eq!(roles, [Role::Miscellaneous, Role::Miscellaneous, Role::Method]);
    }
}
