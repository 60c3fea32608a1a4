//! Seeded generators for small labeled datasets: a toy set of building-code
//! clauses, a task where every token's type is fixed, and a task where the
//! type of most entities is only recoverable from outside knowledge.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use crate::data::{AnnotatedSentence, Dataset, EntitySpan, LabelScheme, Sentence};
use crate::error::Result;
use crate::rng;

/// Builds sentences piece by piece, recording entity spans as it goes.
#[derive(Default)]
struct Builder {
    tokens: Vec<String>,
    spans: Vec<EntitySpan>,
}

impl Builder {
    fn words(&mut self, text: &str) -> &mut Self {
        self.tokens
            .extend(text.split_whitespace().map(str::to_string));
        self
    }

    fn entity(&mut self, text: &str, etype: &str) -> &mut Self {
        let start = self.tokens.len();
        self.words(text);
        self.spans
            .push(EntitySpan::new(start, self.tokens.len(), etype));
        self
    }

    fn finish(&mut self, id: String) -> Result<AnnotatedSentence> {
        let sentence = Sentence::new(id, std::mem::take(&mut self.tokens))?;
        Ok(AnnotatedSentence {
            sentence,
            spans: std::mem::take(&mut self.spans),
        })
    }
}

const TOY_ELEMENTS: [&str; 10] = [
    "exterior wall",
    "fire door",
    "stair",
    "guardrail",
    "roof slab",
    "corridor",
    "load bearing column",
    "window",
    "ramp",
    "smoke vent",
];
const TOY_PROPERTIES: [&str; 8] = [
    "fire resistance",
    "clear width",
    "height",
    "thickness",
    "slope",
    "spacing",
    "headroom",
    "opening area",
];
const TOY_VALUES: [&str; 9] = [
    "2 hours",
    "1.2 m",
    "900 mm",
    "1 : 12",
    "150 mm",
    "2.1 m",
    "0.5 m2",
    "45 minutes",
    "1.05 m",
];

/// About thirty clauses in the style of building regulations with
/// `element`, `property` and `value` entities.
pub fn toy_dataset(n: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng::rng(seed);
    let mut out = Vec::with_capacity(n);
    let mut b = Builder::default();
    for i in 0..n {
        let el = *TOY_ELEMENTS.choose(&mut r).expect("non-empty");
        let pr = *TOY_PROPERTIES.choose(&mut r).expect("non-empty");
        let va = *TOY_VALUES.choose(&mut r).expect("non-empty");
        match r.random_range(0..4) {
            0 => b
                .words("The")
                .entity(pr, "property")
                .words("of the")
                .entity(el, "element")
                .words("shall be at least")
                .entity(va, "value")
                .words("."),
            1 => b
                .words("Each")
                .entity(el, "element")
                .words("shall have a")
                .entity(pr, "property")
                .words("not less than")
                .entity(va, "value")
                .words("."),
            2 => b
                .words("Where a")
                .entity(el, "element")
                .words("is provided , its")
                .entity(pr, "property")
                .words("shall not exceed")
                .entity(va, "value")
                .words("."),
            _ => b
                .words("A")
                .entity(el, "element")
                .words("with a")
                .entity(pr, "property")
                .words("of")
                .entity(va, "value")
                .words("is required in every escape route ."),
        };
        out.push(b.finish(format!("toy-{:03}", i + 1))?);
    }
    Dataset::new(out, LabelScheme::new(["element", "property", "value"]))
}

const SEP_TYPES: [&str; 3] = ["component", "material", "space"];
const SEP_WORDS: [[&str; 10]; 3] = [
    [
        "beam", "column", "lintel", "joist", "truss", "purlin", "stud", "rafter", "girder",
        "corbel",
    ],
    [
        "concrete", "mortar", "timber", "steel", "gypsum", "brick", "glass", "bitumen", "granite",
        "plaster",
    ],
    [
        "lobby",
        "atrium",
        "basement",
        "attic",
        "kitchen",
        "vestibule",
        "plantroom",
        "stairwell",
        "loft",
        "garage",
    ],
];
const FILLERS: [&str; 16] = [
    "the", "a", "of", "shall", "be", "with", "and", "near", "is", "in", "every", "approved",
    "each", "must", "per", "use",
];

/// Entities of one to three words drawn from a fixed per-type word list,
/// separated by at least one filler word. Every word maps to exactly one
/// tag-relevant type, so the task is learnable from token identity.
pub fn separable_dataset(n: usize, words_per_type: usize, seed: u64) -> Result<Dataset> {
    let words_per_type = words_per_type.clamp(1, SEP_WORDS[0].len());
    let mut r = rng::rng(seed);
    let mut out = Vec::with_capacity(n);
    let mut b = Builder::default();
    for i in 0..n {
        let entities = r.random_range(1..=3);
        for _ in 0..entities {
            for _ in 0..r.random_range(1..=3) {
                b.words(FILLERS.choose(&mut r).expect("non-empty"));
            }
            let k = r.random_range(0..SEP_TYPES.len());
            let len = r.random_range(1..=3);
            let text: Vec<&str> = (0..len)
                .map(|_| {
                    *SEP_WORDS[k][..words_per_type]
                        .choose(&mut r)
                        .expect("non-empty")
                })
                .collect();
            b.entity(&text.join(" "), SEP_TYPES[k]);
        }
        if r.random_bool(0.5) {
            b.words(FILLERS.choose(&mut r).expect("non-empty"));
        }
        out.push(b.finish(format!("sep-{:04}", i + 1))?);
    }
    Dataset::new(out, LabelScheme::new(SEP_TYPES))
}

const CUE_TYPES: [&str; 3] = ["equipment", "material", "space"];
const CUE_VERBS: [[&str; 2]; 3] = [
    ["install", "mount"],
    ["pour", "mix"],
    ["enter", "ventilate"],
];
const GENERIC_VERBS: [&str; 2] = ["check", "inspect"];
const SUBJECTS: [&str; 4] = ["The contractor", "Workers", "The inspector", "Each crew"];
const TAILS: [&str; 4] = ["before handover", "on site", "after approval", "daily"];

/// Invented words, unique, from consonant-vowel syllables.
fn pseudo_words(count: usize, r: &mut rng::Rng) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = r.random_range(2..=3);
        let w: String = (0..syllables)
            .flat_map(|_| {
                [
                    *C.choose(r).expect("non-empty") as char,
                    *V.choose(r).expect("non-empty") as char,
                ]
            })
            .collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Sentences `<subject> shall <verb> the <entity> <tail> .` over invented
/// entity words that each occur about 1.5 times. In a share `generic` of
/// sentences the verb is uninformative, so the entity's type can only come
/// from knowing the word itself.
pub fn cue_ambiguous_dataset(n: usize, generic: f64, seed: u64) -> Result<Dataset> {
    let mut r = rng::rng(seed);
    let per_type = n.div_ceil(4).max(1);
    let words = pseudo_words(per_type * CUE_TYPES.len(), &mut r);
    // Every word appears once, a third of them twice, in shuffled order.
    let mut slots: Vec<usize> = (0..words.len())
        .chain((0..words.len()).step_by(3))
        .collect();
    slots.shuffle(&mut r);
    slots.truncate(n);
    let mut out = Vec::with_capacity(n);
    let mut b = Builder::default();
    for (i, &w) in slots.iter().enumerate() {
        let k = w / per_type;
        let verb = if r.random_bool(generic) {
            *GENERIC_VERBS.choose(&mut r).expect("non-empty")
        } else {
            *CUE_VERBS[k].choose(&mut r).expect("non-empty")
        };
        b.words(SUBJECTS.choose(&mut r).expect("non-empty"))
            .words("shall")
            .words(verb)
            .words("the")
            .entity(&words[w], CUE_TYPES[k])
            .words(TAILS.choose(&mut r).expect("non-empty"))
            .words(".");
        out.push(b.finish(format!("cue-{:04}", i + 1))?);
    }
    Dataset::new(out, LabelScheme::new(CUE_TYPES))
}
