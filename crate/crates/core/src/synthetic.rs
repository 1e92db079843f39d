//! Template-generated stand-in corpora: reference-style articles and
//! dialogue-heavy fiction with named authors.
//!
//! Both genres share function words and some content words; fiction adds
//! dialogue, second-person address, modals and dense pronoun use.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Source};
use crate::error::Result;

const SYLLABLES: [&str; 24] = [
    "ka", "ro", "mel", "van", "ti", "sor", "bel", "dun", "ar", "is", "or", "ven", "la", "thu",
    "mi", "gor", "en", "sa", "dri", "pol", "ne", "cas", "lo", "wyn",
];

/// Names are drawn from a fixed lexicon so that both genres share them.
const LEXICON_SEED: u64 = 0x5eed_1e71;

struct Lexicon {
    places: Vec<String>,
    surnames: Vec<String>,
    female: Vec<String>,
    male: Vec<String>,
    rivers: Vec<String>,
}

fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, min_syl: usize, max_syl: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    while out.len() < n {
        let k = rng.random_range(min_syl..=max_syl);
        let w: String = (0..k).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

impl Lexicon {
    fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
        let mut all = pseudo_words(&mut rng, 2600, 2, 3).into_iter();
        let mut take = |n: usize| all.by_ref().take(n).collect::<Vec<_>>();
        Self {
            places: take(900),
            surnames: take(900),
            female: take(300),
            male: take(300),
            rivers: take(200),
        }
    }
}

const KINDS: &[&str] = &[
    "town",
    "city",
    "village",
    "district",
    "province",
    "county",
    "island",
    "valley",
    "port",
    "settlement",
    "municipality",
    "region",
];
const ADJS: &[&str] = &[
    "small",
    "large",
    "coastal",
    "rural",
    "historic",
    "northern",
    "southern",
    "eastern",
    "western",
    "central",
    "mountainous",
    "industrial",
    "ancient",
    "modern",
];
const INDUSTRIES: &[&str] = &[
    "agriculture",
    "fishing",
    "mining",
    "tourism",
    "trade",
    "shipbuilding",
    "textiles",
    "forestry",
    "banking",
    "manufacturing",
    "education",
    "printing",
    "farming",
    "brewing",
];
const PROFESSIONS: &[&str] = &[
    "politician",
    "painter",
    "composer",
    "physicist",
    "chemist",
    "architect",
    "historian",
    "engineer",
    "mathematician",
    "botanist",
    "diplomat",
    "poet",
    "astronomer",
    "surgeon",
    "economist",
    "philosopher",
    "geologist",
    "sculptor",
];
const FIELDS: &[&str] = &[
    "optics",
    "geometry",
    "the history of trade",
    "plant classification",
    "thermodynamics",
    "public health",
    "church music",
    "coastal surveys",
    "number theory",
    "electrical theory",
    "early printing",
    "military engineering",
    "the study of fossils",
    "astronomy",
];
const ORGS: &[&str] = &[
    "university",
    "museum",
    "academy",
    "railway",
    "society",
    "library",
    "observatory",
    "hospital",
    "council",
    "company",
    "cathedral",
    "school",
];
const NATIONALITIES: &[&str] = &[
    "french",
    "german",
    "italian",
    "spanish",
    "dutch",
    "swedish",
    "polish",
    "english",
    "scottish",
    "danish",
    "austrian",
    "portuguese",
];
const EVENTS: &[&str] = &[
    "elections",
    "floods",
    "riots",
    "reforms",
    "negotiations",
    "excavations",
    "games",
    "celebrations",
];
const BASE_VERBS: &[&str] = &[
    "served as",
    "was appointed",
    "was elected",
    "worked as",
    "was named",
    "was trained as",
];

const FICTION_NOUNS: &[&str] = &[
    "door",
    "window",
    "letter",
    "garden",
    "table",
    "fire",
    "lamp",
    "road",
    "house",
    "room",
    "staircase",
    "carriage",
    "river",
    "bridge",
    "field",
    "kitchen",
    "chair",
    "hat",
    "coat",
    "ring",
    "photograph",
    "knife",
    "candle",
    "horse",
];
const RELATIONS: &[&str] = &[
    "mother", "father", "sister", "brother", "husband", "wife", "friend", "daughter", "son",
    "uncle", "aunt", "cousin",
];
const FEELINGS: &[&str] = &[
    "afraid", "tired", "happy", "angry", "sorry", "certain", "ashamed", "alone", "ready", "glad",
    "lost", "cold",
];
const ACTIONS: &[&str] = &[
    "leave",
    "stay",
    "go",
    "wait",
    "tell",
    "forgive",
    "help",
    "understand",
    "remember",
    "believe",
    "listen",
    "come",
    "stop",
    "try",
];
const PAST_ACTIONS: &[&str] = &[
    "laughed", "cried", "slept", "danced", "prayed", "written", "spoken", "eaten", "waited",
    "listened", "smiled",
];
const SAY_VERBS: &[&str] = &[
    "said",
    "says",
    "asked",
    "asks",
    "whispered",
    "replied",
    "cried",
];
const MOTIONS: &[&str] = &[
    "walked", "ran", "turned", "stepped", "hurried", "wandered", "climbed", "crept",
];
const QUESTIONS: &[&str] = &["what", "how", "why", "where", "when", "who"];
const MODALS: &[&str] = &["could", "would", "should", "might", "must", "can", "will"];
const NEGATED: &[&str] = &[
    "wouldn't",
    "couldn't",
    "didn't",
    "don't",
    "can't",
    "won't",
    "shouldn't",
];

fn year(rng: &mut ChaCha8Rng) -> String {
    rng.random_range(1500..2000).to_string()
}

fn number(rng: &mut ChaCha8Rng) -> String {
    let n: u32 = rng.random_range(2..500);
    format!("{},{:03}", n, rng.random_range(0..1000))
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).unwrap()
}

fn pick_s<'a>(rng: &mut ChaCha8Rng, xs: &'a [String]) -> &'a str {
    xs.choose(rng).unwrap()
}

fn cap(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn place_article(rng: &mut ChaCha8Rng, lex: &Lexicon) -> Vec<String> {
    let name = cap(pick_s(rng, &lex.places));
    let kind = pick(rng, KINDS);
    let region = cap(pick_s(rng, &lex.places));
    let mut out = vec![format!(
        "{name} is a {} {kind} in the {} of {region}.",
        pick(rng, ADJS),
        pick(rng, &["region", "province", "district", "north", "south"])
    )];
    let n = rng.random_range(6..18);
    for _ in 0..n {
        let s = match rng.random_range(0..9) {
            0 => format!(
                "The {kind} was founded in {} by {}.",
                year(rng),
                cap(pick_s(rng, &lex.surnames))
            ),
            1 => format!("It has a population of {} people.", number(rng)),
            2 => format!(
                "The economy of {name} is based on {} and {}.",
                pick(rng, INDUSTRIES),
                pick(rng, INDUSTRIES)
            ),
            3 => format!(
                "In {}, the {} of {name} was established.",
                year(rng),
                pick(rng, ORGS)
            ),
            4 => format!(
                "The {} river flows through the {kind} from the {}.",
                cap(pick_s(rng, &lex.rivers)),
                pick(
                    rng,
                    &["north", "south", "east", "west", "hills", "mountains"]
                )
            ),
            5 => format!(
                "Local {} were held in {name} in {}.",
                pick(rng, EVENTS),
                year(rng)
            ),
            6 => format!(
                "The {kind} is connected to {} by {}.",
                cap(pick_s(rng, &lex.places)),
                pick(rng, &["road", "rail", "ferry", "a canal", "a bridge"])
            ),
            7 => format!(
                "Its {} dates from the {} century.",
                pick(rng, ORGS),
                pick(
                    rng,
                    &[
                        "twelfth",
                        "fourteenth",
                        "sixteenth",
                        "seventeenth",
                        "eighteenth",
                        "nineteenth"
                    ]
                )
            ),
            _ => format!(
                "The population of {name} declined after the {} of {}.",
                pick(rng, EVENTS),
                year(rng)
            ),
        };
        out.push(s);
    }
    out
}

fn biography_article(rng: &mut ChaCha8Rng, lex: &Lexicon) -> Vec<String> {
    let female = rng.random_bool(0.5);
    let first = cap(pick_s(rng, if female { &lex.female } else { &lex.male }));
    let last = cap(pick_s(rng, &lex.surnames));
    let (subj, poss) = if female {
        ("She", "her")
    } else {
        ("He", "his")
    };
    let prof = pick(rng, PROFESSIONS);
    let mut out = vec![format!(
        "{first} {last} ({}-{}) was a {} {prof}.",
        year(rng),
        year(rng),
        pick(rng, NATIONALITIES)
    )];
    let n = rng.random_range(5..14);
    for _ in 0..n {
        let s = match rng.random_range(0..8) {
            0 => format!(
                "{subj} was born in {} in {}.",
                cap(pick_s(rng, &lex.places)),
                year(rng)
            ),
            1 => format!("{subj} was known for {poss} work on {}.", pick(rng, FIELDS)),
            2 => format!(
                "{last} {} {} of the {} in {}.",
                pick(rng, BASE_VERBS),
                pick(
                    rng,
                    &["director", "president", "secretary", "member", "professor"]
                ),
                pick(rng, ORGS),
                year(rng)
            ),
            3 => format!(
                "{subj} studied at the {} of {}.",
                pick(rng, ORGS),
                cap(pick_s(rng, &lex.places))
            ),
            4 => format!(
                "In {}, {last} published a study of {}.",
                year(rng),
                pick(rng, FIELDS)
            ),
            5 => format!(
                "{subj} died in {} in {}.",
                cap(pick_s(rng, &lex.places)),
                year(rng)
            ),
            6 => format!(
                "{} {} is named after {last}.",
                cap(pick(rng, &["a street", "a crater", "a school", "a prize"])),
                pick(rng, &["in the capital", "in the city", "nearby"])
            ),
            _ => format!(
                "{subj} married {} {} in {}.",
                cap(pick_s(rng, if female { &lex.male } else { &lex.female })),
                cap(pick_s(rng, &lex.surnames)),
                year(rng)
            ),
        };
        out.push(s);
    }
    out
}

/// Article-style documents, about `target_words` tokens in total.
pub fn base_documents(target_words: usize, seed: u64) -> Vec<Document> {
    let lex = Lexicon::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut words = 0;
    while words < target_words {
        let sentences = if rng.random_bool(0.6) {
            place_article(&mut rng, &lex)
        } else {
            biography_article(&mut rng, &lex)
        };
        let text = sentences.join(" ");
        words += crate::corpus::tokenize(&text).len();
        docs.push(Document {
            id: format!("article_{:05}", docs.len()),
            author: String::new(),
            source: Source::Base,
            text,
        });
    }
    docs
}

struct Character {
    name: String,
    female: bool,
}

fn fiction_sentence(rng: &mut ChaCha8Rng, cast: &[Character], style: f64) -> String {
    let c = cast.choose(rng).unwrap();
    let other = cast.choose(rng).unwrap();
    let (subj, obj, poss) = if c.female {
        ("she", "her", "her")
    } else {
        ("he", "him", "his")
    };
    let oobj = if other.female { "her" } else { "him" };
    // `style` shifts an author between narration and dialogue.
    let dialogue = rng.random_bool(style);
    if dialogue {
        let say = pick(rng, SAY_VERBS);
        let who = if rng.random_bool(0.5) {
            c.name.clone()
        } else {
            subj.to_string()
        };
        let line = match rng.random_range(0..8) {
            0 => format!("{} do you want from me?", cap(pick(rng, QUESTIONS))),
            1 => format!(
                "You {} never {} your {}.",
                pick(rng, MODALS),
                pick(rng, ACTIONS),
                pick(rng, RELATIONS)
            ),
            2 => format!(
                "I {} {} it, not now.",
                pick(rng, NEGATED),
                pick(rng, ACTIONS)
            ),
            3 => format!("Are you {}?", pick(rng, FEELINGS)),
            4 => format!(
                "Your {} {} know about this.",
                pick(rng, RELATIONS),
                pick(rng, MODALS)
            ),
            5 => format!(
                "{} {} we {} now?",
                cap(pick(rng, QUESTIONS)),
                pick(rng, MODALS),
                pick(rng, ACTIONS)
            ),
            6 => format!("I am {}, {}.", pick(rng, FEELINGS), other.name),
            _ => format!(
                "They {} not {} us here.",
                pick(rng, MODALS),
                pick(rng, ACTIONS)
            ),
        };
        return format!("\"{line}\" {who} {say}.");
    }
    match rng.random_range(0..8) {
        0 => format!(
            "{} {} to the {} and looked at {oobj}.",
            c.name,
            pick(rng, MOTIONS),
            pick(rng, FICTION_NOUNS)
        ),
        1 => format!(
            "{} could not remember when {subj} had last {}.",
            cap(subj),
            pick(rng, PAST_ACTIONS)
        ),
        2 => format!(
            "{} took {poss} {} from the {}.",
            c.name,
            pick(rng, FICTION_NOUNS),
            pick(rng, FICTION_NOUNS)
        ),
        3 => format!(
            "{} watched {obj} for a long time, and {} said nothing.",
            other.name,
            if other.female { "she" } else { "he" }
        ),
        4 => format!(
            "They {} together past the {} without a word.",
            pick(rng, MOTIONS),
            pick(rng, FICTION_NOUNS)
        ),
        5 => format!(
            "{} felt {} and {} wished {subj} {} {}.",
            c.name,
            pick(rng, FEELINGS),
            subj,
            pick(rng, MODALS),
            pick(rng, ACTIONS)
        ),
        6 => format!(
            "{}'s {} had told {obj} about the {}.",
            c.name,
            pick(rng, RELATIONS),
            pick(rng, FICTION_NOUNS)
        ),
        _ => format!(
            "It was late when {} came back to the {}.",
            other.name,
            pick(rng, FICTION_NOUNS)
        ),
    }
}

/// Chapters by `authors` distinct authors, about `target_words` tokens in total.
///
/// Document ids are `author__book_chapter` so that directory round trips keep authorship.
pub fn fiction_documents(target_words: usize, authors: usize, seed: u64) -> Vec<Document> {
    let lex = Lexicon::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let author_names: Vec<String> = (0..authors.max(1))
        .map(|i| format!("{}_{}", pick_s(&mut rng, &lex.surnames), i))
        .collect();
    let styles: Vec<f64> = author_names
        .iter()
        .map(|_| rng.random_range(0.3..0.7))
        .collect();
    let mut docs = Vec::new();
    let mut words = 0;
    let mut book = 0;
    while words < target_words {
        let a = rng.random_range(0..author_names.len());
        let cast: Vec<Character> = (0..rng.random_range(2..6))
            .map(|_| {
                let female = rng.random_bool(0.5);
                Character {
                    name: cap(pick_s(
                        &mut rng,
                        if female { &lex.female } else { &lex.male },
                    )),
                    female,
                }
            })
            .collect();
        for chapter in 0..rng.random_range(2..6) {
            let sentences: Vec<String> = (0..rng.random_range(60..160))
                .map(|_| fiction_sentence(&mut rng, &cast, styles[a]))
                .collect();
            let text = sentences.join(" ");
            words += crate::corpus::tokenize(&text).len();
            docs.push(Document {
                id: format!("{}__book{:04}_ch{:02}", author_names[a], book, chapter),
                author: author_names[a].clone(),
                source: Source::Fiction,
                text,
            });
        }
        book += 1;
    }
    docs
}

/// Writes one `<id>.txt` file per document.
pub fn write_corpus_dir(dir: &Path, docs: &[Document]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for d in docs {
        fs::write(dir.join(format!("{}.txt", d.id)), &d.text)?;
    }
    Ok(())
}
