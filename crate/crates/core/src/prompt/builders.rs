use rand::seq::SliceRandom;
use rand::Rng;

use super::{Phase, PromptBundle, PromptError, PromptPool, TaskProperty};
use crate::gateway::Message;
use crate::instruct::InstructionRecord;
use crate::seed::SeedFunction;

pub const EXAMPLE_DELIMITER: &str = "### Example";
pub const SHOTS_CONCEPTS: usize = 8;
pub const SHOTS_INSTRUCTION: usize = 8;
pub const SHOTS_RESPONSE: usize = 1;
pub const INLINE_TEST_PROBABILITY: f64 = 0.5;

/// `k` distinct pool indices in random order.
fn sample_shots<R: Rng + ?Sized>(
    rng: &mut R,
    pool: &PromptPool,
    k: usize,
) -> Result<Vec<usize>, PromptError> {
    if pool.len() < k {
        return Err(PromptError::PoolTooSmall {
            need: k,
            have: pool.len(),
        });
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    Ok(idx)
}

fn reject_delimiter(text: &str) -> Result<(), PromptError> {
    if text.contains(EXAMPLE_DELIMITER) {
        Err(PromptError::DelimiterInInput)
    } else {
        Ok(())
    }
}

fn bundle(phase: Phase, system: &str, user: String, shot_ids: Vec<String>) -> PromptBundle {
    PromptBundle {
        phase,
        messages: vec![Message::system(system), Message::user(user)],
        stop_sequences: vec![EXAMPLE_DELIMITER.to_string()],
        shot_ids,
    }
}

/// Eight `[Code]`/`[Concepts]` shots, then the seed with an open `[Concepts]`
/// slot. Seeds containing the example delimiter are rejected.
pub fn build_concepts_prompt<R: Rng + ?Sized>(
    seed: &SeedFunction,
    pool: &PromptPool,
    rng: &mut R,
) -> Result<PromptBundle, PromptError> {
    reject_delimiter(&seed.rendered)?;
    let shots = sample_shots(rng, pool, SHOTS_CONCEPTS)?;
    let mut user = String::new();
    for (n, &i) in shots.iter().enumerate() {
        let ex = &pool.examples[i];
        user.push_str(&format!(
            "{EXAMPLE_DELIMITER} {}\n[Code]\n{}\n\n[Concepts]\n{}\n\n",
            n + 1,
            ex.seed,
            ex.property.concepts.join(", ")
        ));
    }
    user.push_str(&format!(
        "[Code]\n{}\n\n[Concepts]\n",
        seed.rendered.trim_end()
    ));
    let ids = shots
        .iter()
        .map(|&i| pool.examples[i].example_id.clone())
        .collect();
    Ok(bundle(Phase::S2C, &pool.system_concepts, user, ids))
}

/// Eight `[Property]`/`[Instruction]` shots, then the property with an open
/// `[Instruction]` slot.
pub fn build_instruction_prompt<R: Rng + ?Sized>(
    property: &TaskProperty,
    pool: &PromptPool,
    rng: &mut R,
) -> Result<PromptBundle, PromptError> {
    if property.concepts.is_empty() {
        return Err(PromptError::EmptyConcepts);
    }
    let rendered = property.to_string();
    reject_delimiter(&rendered)?;
    let shots = sample_shots(rng, pool, SHOTS_INSTRUCTION)?;
    let mut user = String::new();
    for (n, &i) in shots.iter().enumerate() {
        let ex = &pool.examples[i];
        user.push_str(&format!(
            "{EXAMPLE_DELIMITER} {}\n[Property]\n{}\n\n[Instruction]\n{}\n\n",
            n + 1,
            ex.property,
            ex.instruction
        ));
    }
    user.push_str(&format!("[Property]\n{rendered}\n\n[Instruction]\n"));
    let ids = shots
        .iter()
        .map(|&i| pool.examples[i].example_id.clone())
        .collect();
    Ok(bundle(Phase::C2I, &pool.system_instruction, user, ids))
}

/// Direct seed-to-instruction variant used for ablations: eight
/// `[Code]`/`[Instruction]` shots.
pub fn build_seed_instruction_prompt<R: Rng + ?Sized>(
    seed: &SeedFunction,
    pool: &PromptPool,
    rng: &mut R,
) -> Result<PromptBundle, PromptError> {
    reject_delimiter(&seed.rendered)?;
    let shots = sample_shots(rng, pool, SHOTS_INSTRUCTION)?;
    let mut user = String::new();
    for (n, &i) in shots.iter().enumerate() {
        let ex = &pool.examples[i];
        user.push_str(&format!(
            "{EXAMPLE_DELIMITER} {}\n[Code]\n{}\n\n[Instruction]\n{}\n\n",
            n + 1,
            ex.seed,
            ex.instruction
        ));
    }
    user.push_str(&format!(
        "[Code]\n{}\n\n[Instruction]\n",
        seed.rendered.trim_end()
    ));
    let ids = shots
        .iter()
        .map(|&i| pool.examples[i].example_id.clone())
        .collect();
    Ok(bundle(Phase::S2I, &pool.system_seed_instruction, user, ids))
}

/// Extracts an inlinable test: the first fenced block of `tests` whose
/// non-blank, non-comment lines are all `assert` statements. Returns that
/// block's first assertion.
pub fn conforming_test(tests: &str) -> Option<String> {
    let mut in_block = false;
    let mut lines = Vec::new();
    for line in tests.lines() {
        if line.trim_start().starts_with("```") {
            if in_block {
                break;
            }
            in_block = true;
            continue;
        }
        if in_block {
            lines.push(line);
        }
    }
    if !in_block {
        return None;
    }
    let code: Vec<&str> = lines
        .into_iter()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect();
    if code.is_empty() || !code.iter().all(|l| l.starts_with("assert ")) {
        return None;
    }
    Some(code[0].to_string())
}

/// The inline-test coin: true with probability one half.
pub fn inline_test_coin<R: Rng + ?Sized>(rng: &mut R) -> bool {
    rng.random_bool(INLINE_TEST_PROBABILITY)
}

fn with_inline_test(instruction: &str, test: &str) -> String {
    format!(
        "{instruction}\n\nYour code should pass the following assertion:\n```python\n{test}\n```"
    )
}

/// One shot with its response and tests concatenated, then the instruction
/// with an open `[Response]` slot. When `inline_test` is set and the shot's
/// tests conform, the shot instruction also carries its first assertion.
pub fn build_response_prompt<R: Rng + ?Sized>(
    instr: &InstructionRecord,
    pool: &PromptPool,
    rng: &mut R,
    inline_test: bool,
) -> Result<PromptBundle, PromptError> {
    reject_delimiter(&instr.instruction)?;
    let shots = sample_shots(rng, pool, SHOTS_RESPONSE)?;
    let ex = &pool.examples[shots[0]];
    let shot_instruction = match (inline_test, conforming_test(&ex.tests)) {
        (true, Some(test)) => with_inline_test(&ex.instruction, &test),
        _ => ex.instruction.clone(),
    };
    let user = format!(
        "{EXAMPLE_DELIMITER} 1\n[Instruction]\n{shot_instruction}\n\n[Response]\n{}\n\n[Tests]\n{}\n\n\
         [Instruction]\n{}\n\n[Response]\n",
        ex.response,
        ex.tests,
        instr.instruction.trim_end()
    );
    Ok(bundle(
        Phase::I2R,
        &pool.system_response,
        user,
        vec![ex.example_id.clone()],
    ))
}

/// Binary GOOD/POOR docstring review; no shots.
pub fn build_docstring_prompt(seed: &SeedFunction, pool: &PromptPool) -> PromptBundle {
    PromptBundle {
        phase: Phase::DocstringQc,
        messages: vec![
            Message::system(pool.system_docstring.clone()),
            Message::user(format!(
                "[Function]\n{}\n\n[Verdict]\n",
                seed.rendered.trim_end()
            )),
        ],
        stop_sequences: vec!["\n".to_string()],
        shot_ids: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::seed::{extract_functions, SourceDocument};

    fn seed() -> SeedFunction {
        extract_functions(&SourceDocument::new(
            "d",
            "d.py",
            "def f(s):\n    \"\"\"Upper.\"\"\"\n    return s.upper()\n",
        ))
        .functions
        .remove(0)
    }

    fn instruction(text: &str) -> InstructionRecord {
        InstructionRecord {
            instruction_id: "i1".into(),
            seed_id: "d#0000".into(),
            property: super::super::sample_property(
                &mut rng::seeded(0),
                &["x".to_string()],
                "Python",
            )
            .unwrap(),
            instruction: text.into(),
            prompt_version: "v1".into(),
        }
    }

    #[test]
    fn shot_counts() {
        let pool = PromptPool::builtin();
        let mut r = rng::seeded(1);
        let s2c = build_concepts_prompt(&seed(), &pool, &mut r).unwrap();
        assert_eq!(s2c.shot_ids.len(), 8);
        assert_eq!(s2c.example_blocks(), 8);
        let i2r = build_response_prompt(&instruction("Write f."), &pool, &mut r, false).unwrap();
        assert_eq!(i2r.shot_ids.len(), 1);
        assert_eq!(i2r.example_blocks(), 1);
    }

    #[test]
    fn small_pool_uses_everything() {
        let mut pool = PromptPool::builtin();
        pool.examples.truncate(8);
        let b = build_concepts_prompt(&seed(), &pool, &mut rng::seeded(3)).unwrap();
        let mut ids = b.shot_ids.clone();
        ids.sort();
        let mut all: Vec<_> = pool.examples.iter().map(|e| e.example_id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
        pool.examples.truncate(7);
        assert!(matches!(
            build_concepts_prompt(&seed(), &pool, &mut rng::seeded(3)),
            Err(PromptError::PoolTooSmall { need: 8, have: 7 })
        ));
        pool.examples.clear();
        assert!(
            build_response_prompt(&instruction("x"), &pool, &mut rng::seeded(3), false).is_err()
        );
    }

    #[test]
    fn delimiter_in_seed_rejected() {
        let mut s = seed();
        s.rendered.push_str("# ### Example 4\n");
        assert!(matches!(
            build_concepts_prompt(&s, &PromptPool::builtin(), &mut rng::seeded(0)),
            Err(PromptError::DelimiterInInput)
        ));
    }

    #[test]
    fn no_section_leakage() {
        let pool = PromptPool::builtin();
        let s2c = build_concepts_prompt(&seed(), &pool, &mut rng::seeded(5)).unwrap();
        let user = &s2c.messages[1].content;
        for tag in ["[Instruction]", "[Response]", "[Tests]", "[Property]"] {
            assert!(!user.contains(tag), "{tag}");
        }
        let prop = instruction("x").property;
        let c2i = build_instruction_prompt(&prop, &pool, &mut rng::seeded(5)).unwrap();
        let user = &c2i.messages[1].content;
        for tag in ["[Code]", "[Concepts]", "[Response]", "[Tests]"] {
            assert!(!user.contains(tag), "{tag}");
        }
    }

    #[test]
    fn conforming_tests() {
        assert_eq!(
            conforming_test("Check:\n```python\n# basic\nassert f(1) == 2\nassert f(2) == 3\n```"),
            Some("assert f(1) == 2".to_string())
        );
        assert_eq!(
            conforming_test("```python\nimport math\nassert f(1)\n```"),
            None
        );
        assert_eq!(conforming_test("no code here"), None);
    }

    #[test]
    fn inline_flag_controls_shot_instruction() {
        let mut pool = PromptPool::builtin();
        pool.examples.retain(|e| e.example_id == "ex01");
        let off = build_response_prompt(&instruction("Do it."), &pool, &mut rng::seeded(0), false)
            .unwrap();
        let on = build_response_prompt(&instruction("Do it."), &pool, &mut rng::seeded(0), true)
            .unwrap();
        let marker = "Your code should pass the following assertion:\n```python\nassert encode_integer_to_chars(0) == chr(63)\n```";
        assert!(!off.messages[1].content.contains(marker));
        assert!(on.messages[1].content.contains(marker));
        assert!(off.messages[1].content.contains(&format!(
            "[Instruction]\n{}\n\n[Response]",
            pool.examples[0].instruction
        )));
    }

    #[test]
    fn open_slots() {
        let pool = PromptPool::builtin();
        let b = build_response_prompt(&instruction("Do it."), &pool, &mut rng::seeded(0), false)
            .unwrap();
        assert!(b.messages[1]
            .content
            .ends_with("```\n\n[Instruction]\nDo it.\n\n[Response]\n"));
        let b = build_concepts_prompt(&seed(), &pool, &mut rng::seeded(0)).unwrap();
        assert!(b.messages[1]
            .content
            .ends_with("return s.upper()\n\n[Concepts]\n"));
        assert_eq!(b.stop_sequences, vec!["### Example"]);
    }
}
