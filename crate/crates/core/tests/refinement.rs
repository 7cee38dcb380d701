//! Refinement never overrides facts stated in the script and never empties
//! a filled field, whatever the chat backend proposes.

use std::hash::{DefaultHasher, Hash, Hasher};

use panelwright_core::backends::{Backend, BackendError, EmbedPayload, ImageAsset, ImageRequest, MockBackend};
use panelwright_core::director::{all_targets, refine_entities, PromptSet};
use panelwright_core::script_ir::{parse_screenplay, ProfileField, ScriptIR};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const NAMES: &[&str] = &["ANNA", "BORIS", "CLEO", "DMITRI", "EVE", "FARID"];
const AGES: &[&str] = &["early thirties", "late twenties", "mid forties", "early sixties"];
const BUILDS: &[&str] = &["slender", "stocky", "wiry", "lanky", "petite"];
const CLOTHES: &[&str] = &["red dress", "navy coat", "grey suit", "yellow raincoat", "green sweater"];
const HAIR: &[&str] = &["short dark hair", "long grey hair", "curly red hair", "cropped blond hair"];
const MARKS: &[&str] = &["round glasses", "freckles", "pale freckles", "silver earrings"];

/// A generated script and the facts planted for each character.
struct Case {
    text: String,
    planted: Vec<Vec<(ProfileField, &'static str)>>,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.gen_range(2..=4);
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(rng);
    let names = &names[..n];
    let mut text = String::from("INT. WAITING ROOM - DAY\n\n");
    let mut planted = Vec::new();
    for name in names {
        let mut facts = Vec::new();
        let mut sentence = name.to_string();
        let mut extra = Vec::new();
        if rng.gen_bool(0.5) {
            let a = *AGES.choose(rng).unwrap();
            sentence.push_str(&format!(", {a},"));
            facts.push((ProfileField::AgeBand, a));
        }
        if rng.gen_bool(0.5) {
            let b = *BUILDS.choose(rng).unwrap();
            extra.push(format!("Looks {b}."));
            facts.push((ProfileField::Build, b));
        }
        if rng.gen_bool(0.6) {
            let c = *CLOTHES.choose(rng).unwrap();
            sentence.push_str(&format!(" sits wearing a {c}."));
            facts.push((ProfileField::Clothing, c));
        } else {
            sentence.push_str(" sits down.");
        }
        if rng.gen_bool(0.5) {
            let h = *HAIR.choose(rng).unwrap();
            extra.push(format!("Has {h}."));
            facts.push((ProfileField::Hair, h));
        }
        if rng.gen_bool(0.4) {
            let m = *MARKS.choose(rng).unwrap();
            extra.push(format!("Wears {m}."));
            facts.push((ProfileField::Features, m));
        }
        text.push_str(&sentence);
        for e in extra {
            text.push(' ');
            text.push_str(&e);
        }
        text.push_str(&format!("\n\n{name}\nIs this the right room?\n\n"));
        planted.push(facts);
    }
    Case { text, planted }
}

/// Chat backend answering refinement requests with arbitrary proposals:
/// blanks, random values and contradictions of whatever is already set.
/// The final round always offers a value so gaps can close.
struct Chaos {
    seed: u64,
    rounds: u32,
    inner: MockBackend,
}

impl Backend for Chaos {
    fn identity(&self) -> String {
        format!("chaos({})", self.seed)
    }

    fn chat_complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        if !system.contains("I1_refine") {
            return self.inner.chat_complete(system, user);
        }
        let mut h = DefaultHasher::new();
        (self.seed, user).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let last = user.contains(&format!("Refinement round: {}", self.rounds));
        let pools: [&[&str]; 5] = [AGES, HAIR, CLOTHES, BUILDS, MARKS];
        let mut profile = serde_json::Map::new();
        for (field, pool) in ProfileField::ALL.into_iter().zip(pools) {
            let v = match rng.gen_range(0..4) {
                0 if !last => String::new(),
                1 => "something else entirely".to_string(),
                _ => pool.choose(&mut rng).unwrap().to_string(),
            };
            profile.insert(field.key().to_string(), json!(v));
        }
        let details = if rng.gen_bool(0.3) && !last { "" } else { "flat grey light" };
        let body = json!({"profile": profile, "details": details});
        Ok(format!("Reasoning: arbitrary.\n\n```json\n{body}\n```\n"))
    }

    fn text_to_image(&self, r: &ImageRequest) -> Result<ImageAsset, BackendError> {
        self.inner.text_to_image(r)
    }

    fn image_to_multiview(&self, r: &ImageAsset) -> Result<Vec<ImageAsset>, BackendError> {
        self.inner.image_to_multiview(r)
    }

    fn embed(&self, p: EmbedPayload<'_>) -> Result<Vec<f32>, BackendError> {
        self.inner.embed(p)
    }
}

fn check(case: &Case, before: &ScriptIR, after: &ScriptIR) {
    for (i, facts) in case.planted.iter().enumerate() {
        let c = &after.characters[i];
        for (field, value) in facts {
            assert_eq!(c.refined_profile.get(*field), *value, "{} {}", c.id, field.key());
        }
    }
    for (b, a) in before.characters.iter().zip(&after.characters) {
        for f in ProfileField::ALL {
            let old = b.refined_profile.get(f);
            if !old.trim().is_empty() {
                assert_eq!(a.refined_profile.get(f), old, "{} {}", a.id, f.key());
            }
        }
        assert!(a.refined_profile.gaps().is_empty());
    }
    for (b, a) in before.spots.iter().zip(&after.spots) {
        if !b.refined_details.is_empty() {
            assert_eq!(a.refined_details, b.refined_details);
        }
    }
}

fn run(case: &Case, backend: &dyn Backend, rounds: u32) {
    let ir = parse_screenplay(&case.text).unwrap();
    assert_eq!(ir.characters.len(), case.planted.len());
    let prompts = PromptSet::default();
    let mut log = Vec::new();
    let (first, _) = refine_entities(&ir, &all_targets(&ir), rounds, &prompts, backend, &mut log).unwrap();
    check(case, &ir, &first);
    // a second pass over an already refined project changes nothing
    let (second, _) = refine_entities(&first, &all_targets(&first), rounds, &prompts, backend, &mut log).unwrap();
    check(case, &first, &second);
    for (a, b) in first.characters.iter().zip(&second.characters) {
        assert_eq!(a.refined_profile, b.refined_profile);
    }
}

#[test]
fn fifty_mock_runs_keep_grounded_and_filled_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let case = random_case(&mut rng);
        let backend = MockBackend::new(rng.gen());
        run(&case, &backend, rng.gen_range(2..=3));
    }
}

#[test]
fn fifty_adversarial_runs_keep_grounded_and_filled_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let case = random_case(&mut rng);
        let rounds = rng.gen_range(1..=3);
        let backend = Chaos { seed: rng.gen(), rounds, inner: MockBackend::new(0) };
        run(&case, &backend, rounds);
    }
}
