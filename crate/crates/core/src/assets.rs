//! Word lists and prompt fixtures bundled with the crate.

/// 124 male/female pairs, `male<TAB>female`.
pub const GENDER_LEXICON: &str = include_str!("../assets/gender_lexicon.tsv");
/// Gender-neutral occupation list, one word per line.
pub const OCCUPATIONS: &str = include_str!("../assets/occupations.txt");
pub const SYNTHETIC_OCCUPATIONS: &str = include_str!("../assets/synthetic_occupations.tsv");
pub const SYNTHETIC_DESCRIPTORS: &str = include_str!("../assets/synthetic_descriptors.tsv");
pub const TOXICITY_LEXICON: &str = include_str!("../assets/toxicity_lexicon.tsv");
pub const SENTIMENT_LEXICON: &str = include_str!("../assets/sentiment_lexicon.tsv");
/// Gendered prompt pairs whose completions are scored for toxicity.
pub const HONEST_PROMPTS: &str = include_str!("../assets/honest_prompts.tsv");
/// Gendered prompt pairs whose completions are scored for negative sentiment.
pub const REGARD_PROMPTS: &str = include_str!("../assets/regard_prompts.tsv");
/// Gender-neutral profession prompts.
pub const BOLD_PROMPTS: &str = include_str!("../assets/bold_prompts.tsv");
pub const STEREO_TRIPLES: &str = include_str!("../assets/stereo_triples.tsv");
