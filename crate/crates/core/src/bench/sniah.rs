use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{estimate_length, BenchSample, Gold, SampleMeta};

pub const NEEDLE_NOUNS: &[&str] = &[
    "lantern", "harbor", "orchid", "falcon", "compass", "meadow", "glacier", "violin", "quarry", "saddle",
    "thimble", "beacon", "canyon", "ember", "juniper", "kettle", "lagoon", "mosaic", "nectar", "parsley",
    "quill", "ribbon", "sparrow", "tundra", "umbrella", "walnut", "yarrow", "zephyr", "anchor", "bramble",
];

// No digits and no "magic number" anywhere, so the needle stays unique.
const SUBJECTS: &[&str] = &[
    "The committee",
    "A traveling merchant",
    "The old lighthouse keeper",
    "Most gardeners",
    "The village baker",
    "An apprentice cartographer",
    "The river ferry",
    "Every spring the orchard",
    "The night watch",
    "A quiet librarian",
    "The mountain road",
    "Our neighbor",
];
const VERBS: &[&str] = &[
    "considered",
    "painted",
    "described",
    "ignored",
    "rebuilt",
    "remembered",
    "measured",
    "visited",
    "questioned",
    "celebrated",
    "repaired",
    "forgot",
];
const OBJECTS: &[&str] = &[
    "the northern wall",
    "a basket of pears",
    "the weathered map",
    "the long afternoon",
    "an unfinished letter",
    "the copper bell",
    "the crooked fence",
    "a field of barley",
    "the narrow bridge",
    "the winter market",
    "a borrowed umbrella",
    "the evening tide",
];
const TAILS: &[&str] = &[
    "before the rain arrived",
    "with unusual care",
    "without saying much",
    "for reasons nobody recalled",
    "while the kettle boiled",
    "as the bells rang",
    "after a long debate",
    "in the soft morning light",
    "despite the wind",
    "once again",
    "with a patient smile",
    "near the edge of town",
];

fn filler_sentence(rng: &mut impl Rng) -> String {
    format!(
        "{} {} {} {}. ",
        SUBJECTS.choose(rng).unwrap(),
        VERBS.choose(rng).unwrap(),
        OBJECTS.choose(rng).unwrap(),
        TAILS.choose(rng).unwrap()
    )
}

/// Generates `count` single-needle samples of roughly `haystack_tokens`
/// tokens each (4 characters per token). Same seed, same bytes.
pub fn generate_sniah(count: usize, haystack_tokens: usize, seed: u64) -> Vec<BenchSample> {
    assert!(count >= 1, "count must be at least 1");
    assert!(haystack_tokens >= 64, "haystack_tokens must be at least 64");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let noun = *NEEDLE_NOUNS.choose(&mut rng).unwrap();
            let value: u32 = rng.gen_range(1_000_000..10_000_000);
            let needle = format!("The special magic number for {noun} is {value}. ");
            let target = haystack_tokens * 4;

            let mut sentences = Vec::new();
            let mut len = needle.len();
            while len < target {
                let s = filler_sentence(&mut rng);
                len += s.len();
                sentences.push(s);
            }
            let at = rng.gen_range(0..=sentences.len());
            sentences.insert(at, needle);
            let context = sentences.concat().trim_end().to_string();

            BenchSample {
                id: format!("sniah-{seed}-{i}"),
                question: format!(
                    "What is the special magic number for {noun} mentioned in the provided text?"
                ),
                gold: Gold::ExactText {
                    answers: vec![value.to_string()],
                },
                meta: SampleMeta {
                    source: "sniah".into(),
                    token_length_estimate: estimate_length(&context),
                },
                context,
            }
        })
        .collect()
}
