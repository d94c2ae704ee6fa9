//! The five instruction sets, verbatim, plus the zero-mention suffix line.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionSpec {
    /// 1 through 5.
    pub id: u8,
    /// Substituted into the first line of instruction 1 only.
    pub language_name: String,
    pub include_zero_suffix: bool,
}

impl InstructionSpec {
    pub fn new(id: u8, language_name: impl Into<String>, include_zero_suffix: bool) -> Self {
        InstructionSpec {
            id,
            language_name: language_name.into(),
            include_zero_suffix,
        }
    }
}

impl Default for InstructionSpec {
    fn default() -> Self {
        InstructionSpec::new(5, "English", false)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("instruction id {0} is out of range 1..=5")]
pub struct UnknownInstruction(pub u8);

pub const ZERO_SUFFIX: &str = "Where you see </z>@ there is a zero mention, which is normally not written but you also need to link them with other mentions.";

const INST_2: &str = "\
Identify instances of coreference where different mentions refer to the same entity.
Rewrite the passage, tagging each term with a unique identifier and indicating coreferential relationships.
Ensure accuracy and consider context.
Fill MASK with unique number for every entity. Be sure that they represent exactly the same entity, not similar.
Example output format:
... <m>Bertrand Russell </m>#MASK is a good author, I love <m>The History of Western Philosophy </m>#MASK ...
... <m>Bertrand Russell </m>#0 is good author,  I love <m>The History of Western Philosophy </m>#1 ...";

const INST_3: &str = "\
For every mention in <m> </m> tags examine if there is any coreferential/coherent mention.
If two mentions represent the same entity write the same number instead of MASK after closing mention tag </m>.
Do not change anything else other than MASK.";

const INST_4: &str = "\
For every mention in <m> </m> tags examine if there is any coreferential mention.
If two mentions represent the same entity write the same number instead of MASK after closing mention tag </m>.
For example: author and book represent different entities.
Do not change anything else other than MASK.";

const INST_5: &str = "\
For every mention in <m> </m> tags examine if there is any coreferential/coherent mention.
If two mentions represent the same entity write the same number instead of MASK after closing mention tag </m>.
For example: author and book represent different entities.
Do not change anything else other than MASK.";

fn inst_1(language: &str) -> String {
    format!(
        "The text is in {language}.
You are a coreference resolver.
Rewrite the sentence considering these rules:
Mentions are in <m>...</m>#MASK format.
Group the mentions that refer to same real-world entity.
If mentions refer to same thing write the same number instead of MASK.
If mentions represent different things write another number."
    )
}

/// Lines are separated by `\n`; there is no trailing newline.
pub fn render_instruction(spec: &InstructionSpec) -> Result<String, UnknownInstruction> {
    let mut text = match spec.id {
        1 => inst_1(&spec.language_name),
        2 => INST_2.to_owned(),
        3 => INST_3.to_owned(),
        4 => INST_4.to_owned(),
        5 => INST_5.to_owned(),
        other => return Err(UnknownInstruction(other)),
    };
    if spec.include_zero_suffix {
        text.push('\n');
        text.push_str(ZERO_SUFFIX);
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inst5_with_zero_suffix() {
        let text = render_instruction(&InstructionSpec::new(5, "Hungarian", true)).unwrap();
        assert!(text.contains("coreferential/coherent mention"));
        assert!(text.contains("For example: author and book represent different entities."));
        assert!(text.ends_with(ZERO_SUFFIX));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn inst1_substitutes_language() {
        let text = render_instruction(&InstructionSpec::new(1, "English", false)).unwrap();
        assert_eq!(text.lines().next(), Some("The text is in English."));
        let hu = render_instruction(&InstructionSpec::new(1, "Hungarian", false)).unwrap();
        assert_eq!(hu.lines().next(), Some("The text is in Hungarian."));
        // Only instruction 1 mentions the language.
        let five = render_instruction(&InstructionSpec::new(5, "Hungarian", false)).unwrap();
        assert!(!five.contains("Hungarian"));
    }

    #[test]
    fn inst4_is_coreferential_only() {
        let text = render_instruction(&InstructionSpec::new(4, "x", false)).unwrap();
        assert!(text.contains("coreferential"));
        assert!(!text.contains("coherent"));
        let three = render_instruction(&InstructionSpec::new(3, "x", false)).unwrap();
        assert!(three.contains("coreferential/coherent"));
        assert!(!three.contains("author and book"));
    }

    #[test]
    fn out_of_range() {
        assert_eq!(
            render_instruction(&InstructionSpec::new(0, "x", false)),
            Err(UnknownInstruction(0))
        );
        assert_eq!(
            render_instruction(&InstructionSpec::new(6, "x", false)),
            Err(UnknownInstruction(6))
        );
    }

    #[test]
    fn suffix_is_last_line_for_every_set() {
        for id in 1..=5 {
            let text = render_instruction(&InstructionSpec::new(id, "x", true)).unwrap();
            assert_eq!(text.lines().last(), Some(ZERO_SUFFIX));
        }
    }
}
