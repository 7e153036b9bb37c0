//! Template-based synthetic review corpora for desk-scale experiments.
//!
//! Each profile carries its own aspect lexicon, opinion lexicon and sentence
//! templates. Two profiles with disjoint aspect lexicons emulate a domain gap;
//! templates and general opinion words can be shared between them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::convert::project_tuple;
use crate::error::{Error, Result};
use crate::types::{Corpus, DomainId, Example, Polarity, SentimentTuple, Split, Task};

/// A sentence pattern. `{a1}`..`{a3}` are aspect slots and `{o1}`..`{o3}` the
/// opinion for the aspect with the same index. A template without slots
/// produces a sentence with no tuples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Template(pub String);

impl Template {
    fn slots(&self) -> usize {
        (1..=3).take_while(|i| self.0.contains(&format!("{{a{i}}}"))).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub name: String,
    pub aspects: Vec<String>,
    pub opinions: Vec<(String, Polarity)>,
    pub templates: Vec<Template>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| (*s).to_owned()).collect()
}

fn opinions(pos: &[&str], neu: &[&str], neg: &[&str]) -> Vec<(String, Polarity)> {
    let tag = |list: &[&str], p| list.iter().map(move |s| ((*s).to_owned(), p)).collect::<Vec<_>>();
    [tag(pos, Polarity::Pos), tag(neu, Polarity::Neu), tag(neg, Polarity::Neg)].concat()
}

fn templates(list: &[&str]) -> Vec<Template> {
    list.iter().map(|s| Template((*s).to_owned())).collect()
}

const SHARED_TEMPLATES: &[&str] = &[
    "the {a1} is {o1} .",
    "i think the {a1} was {o1} .",
    "the {a1} is {o1} but the {a2} is {o2} .",
    "{o1} {a1} and {o2} {a2} .",
    "overall the {a1} was really {o1} .",
    "i found the {a1} {o1} and the {a2} {o2} .",
    "nothing special to report here .",
    "i would say it is what it is .",
];

const GENERAL_POS: &[&str] = &["great", "good", "excellent", "nice", "amazing"];
const GENERAL_NEU: &[&str] = &["okay", "average", "ordinary"];
const GENERAL_NEG: &[&str] = &["terrible", "bad", "awful", "poor", "disappointing"];

impl DomainProfile {
    /// Two built-in review domains. `aspect_overlap` in `[0, 1]` is the share of
    /// the second profile's aspects replaced by aspects of the first.
    pub fn builtin_pair(aspect_overlap: f64) -> (DomainProfile, DomainProfile) {
        let gadgets = DomainProfile {
            name: "gadgets".into(),
            aspects: words(&[
                "mouse", "screen", "keyboard", "battery life", "touchpad", "speakers",
                "hard drive", "charger", "processor", "webcam", "graphics card", "fan",
                "display", "memory", "operating system", "trackpad", "power supply", "hinge",
                "camera", "headphone jack", "case", "warranty", "software", "ports",
            ]),
            opinions: opinions(
                &["fast", "sturdy", "bright", "responsive", "reliable"],
                &["standard", "adequate"],
                &["slow", "flimsy", "dim", "noisy", "buggy"],
            )
            .into_iter()
            .chain(opinions(GENERAL_POS, GENERAL_NEU, GENERAL_NEG))
            .collect(),
            templates: templates(
                &[
                    SHARED_TEMPLATES,
                    &[
                        "after a week the {a1} seems {o1} .",
                        "the {a1} on this laptop is {o1} .",
                        "i upgraded the {a1} and it is {o1} now .",
                        "it boots quickly and runs well .",
                    ],
                ]
                .concat(),
            ),
        };
        let mut dining = DomainProfile {
            name: "dining".into(),
            aspects: words(&[
                "pizza", "waiter", "sushi", "wine list", "dessert", "service", "pasta",
                "bartender", "steak", "ambience", "fish tacos", "menu", "salad", "staff",
                "prices", "decor", "noodles", "waitress", "coffee", "portions", "bread",
                "brunch", "seafood", "music",
            ]),
            opinions: opinions(
                &["delicious", "tasty", "fresh", "friendly", "attentive"],
                &["acceptable", "modest"],
                &["bland", "stale", "rude", "greasy", "overpriced"],
            )
            .into_iter()
            .chain(opinions(GENERAL_POS, GENERAL_NEU, GENERAL_NEG))
            .collect(),
            templates: templates(
                &[
                    SHARED_TEMPLATES,
                    &[
                        "we ordered the {a1} and it was {o1} .",
                        "the {a1} here is always {o1} .",
                        "our {a1} was {o1} tonight .",
                        "we will definitely come back .",
                    ],
                ]
                .concat(),
            ),
        };
        let k = ((aspect_overlap.clamp(0.0, 1.0) * dining.aspects.len() as f64).round() as usize)
            .min(gadgets.aspects.len());
        dining.aspects[..k].clone_from_slice(&gadgets.aspects[..k]);
        (gadgets, dining)
    }

    fn validate(&self) -> Result<()> {
        if self.aspects.len() < 3 || self.opinions.len() < 3 || self.templates.is_empty() {
            return Err(Error::Config(format!(
                "profile {} needs at least 3 aspects, 3 opinions and one template",
                self.name
            )));
        }
        Ok(())
    }
}

/// Deterministic labeled corpus of `size` examples drawn from `profile`.
pub fn synth_corpus(profile: &DomainProfile, task: Task, size: usize, seed: u64) -> Result<Corpus> {
    if size == 0 {
        return Err(Error::Config("synthetic corpus size must be positive".into()));
    }
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(size);
    while examples.len() < size {
        let template = profile.templates.choose(&mut rng).expect("validated");
        let n = template.slots();
        let aspects: Vec<&String> = profile.aspects.choose_multiple(&mut rng, n).collect();
        let opinions: Vec<&(String, Polarity)> = profile.opinions.choose_multiple(&mut rng, n).collect();
        let mut sentence = template.0.clone();
        let mut tuples = Vec::with_capacity(n);
        for i in 0..n {
            sentence = sentence
                .replace(&format!("{{a{}}}", i + 1), aspects[i])
                .replace(&format!("{{o{}}}", i + 1), &opinions[i].0);
            let full = SentimentTuple::new(aspects[i], Some(&opinions[i].0), Some(opinions[i].1))?;
            tuples.push(project_tuple(&full, task)?);
        }
        examples.push(Example::new(&sentence, tuples)?);
    }
    Corpus::new(DomainId::new(profile.name.clone()), task, Split::Train, true, examples)
}
