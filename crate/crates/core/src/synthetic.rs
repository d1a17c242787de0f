//! Deterministic synthetic corpora for tests, demos and benchmarks.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::corpus::{ClassificationCorpus, ClassificationSample, Corpus};
use crate::error::{Error, Result};
use crate::rng::seeded;

struct Intent {
    label: &'static str,
    templates: &'static [&'static str],
    slots: &'static [&'static str],
}

const INTENTS: [Intent; 7] = [
    Intent {
        label: "book_flight",
        templates: &[
            "book a flight to {}",
            "i need a plane ticket to {}",
            "find me flights to {} next week",
            "can you reserve a seat on a flight to {}",
            "fly me to {} on friday",
            "what flights go to {} tomorrow morning",
            "get me an airline ticket for {}",
            "i want to fly to {}",
        ],
        slots: &["paris", "tokyo", "berlin", "new york", "madrid", "lima", "cairo", "oslo", "sydney", "toronto"],
    },
    Intent {
        label: "check_weather",
        templates: &[
            "what is the weather in {}",
            "will it rain in {} today",
            "how hot is it in {} right now",
            "give me the forecast for {}",
            "is it going to snow in {}",
            "tell me the temperature in {}",
            "do i need an umbrella in {}",
            "how windy will it be in {} this afternoon",
        ],
        slots: &["london", "chicago", "seattle", "dublin", "rome", "denver", "miami", "vienna", "boston", "delhi"],
    },
    Intent {
        label: "play_music",
        templates: &[
            "play some {} music",
            "put on a {} playlist",
            "i want to listen to {} songs",
            "start playing {} tracks",
            "queue up some {}",
            "can you play a {} album",
            "shuffle my {} songs",
            "turn on {} radio",
        ],
        slots: &["jazz", "rock", "classical", "hip hop", "country", "blues", "reggae", "techno", "folk", "metal"],
    },
    Intent {
        label: "set_alarm",
        templates: &[
            "set an alarm for {}",
            "wake me up at {}",
            "create an alarm at {}",
            "i need an alarm for {} tomorrow",
            "please set my alarm to {}",
            "remind me to wake up at {}",
            "alarm at {} please",
            "schedule a wake up alarm for {}",
        ],
        slots: &["six am", "seven thirty", "noon", "five fifteen", "eight o clock", "midnight", "nine am", "four pm"],
    },
    Intent {
        label: "order_food",
        templates: &[
            "order a {} for delivery",
            "i want to get {} delivered",
            "can you order me some {}",
            "get a {} from the nearest restaurant",
            "i am hungry order {}",
            "place a delivery order for {}",
            "bring me {} for dinner",
            "find a place that delivers {}",
        ],
        slots: &["pizza", "burger", "sushi", "pad thai", "burrito", "salad", "curry", "ramen", "kebab", "tacos"],
    },
    Intent {
        label: "transfer_money",
        templates: &[
            "send {} to my savings account",
            "transfer {} to john",
            "move {} from checking to savings",
            "wire {} to my landlord",
            "pay {} to my sister",
            "i want to transfer {} to another account",
            "make a bank transfer of {}",
            "send a payment of {} to mike",
        ],
        slots: &["fifty dollars", "100 euros", "twenty pounds", "300 dollars", "five hundred", "ten bucks", "1000 yen"],
    },
    Intent {
        label: "translate_text",
        templates: &[
            "translate this sentence into {}",
            "how do you say hello in {}",
            "what is the {} word for cat",
            "can you translate my message to {}",
            "say thank you in {}",
            "convert this paragraph into {}",
            "i need a {} translation of this",
            "what does this mean in {}",
        ],
        slots: &["spanish", "french", "german", "japanese", "italian", "korean", "russian", "hindi", "dutch", "greek"],
    },
];

/// Labels of [`intent_corpus`], sorted.
pub fn intent_labels() -> Vec<String> {
    let mut l: Vec<String> = INTENTS.iter().map(|i| i.label.to_string()).collect();
    l.sort();
    l
}

/// Templated utterances for seven intents, `per_class` each, grouped by
/// intent in declaration order.
pub fn intent_corpus(per_class: usize, seed: u64) -> Result<ClassificationCorpus> {
    if per_class < 2 {
        return Err(Error::Config("intent_corpus needs at least 2 samples per class".into()));
    }
    let mut rng = seeded(seed, "intents");
    let mut samples = Vec::with_capacity(per_class * INTENTS.len());
    for intent in &INTENTS {
        for _ in 0..per_class {
            let template = intent.templates.choose(&mut rng).expect("templates");
            let slot = intent.slots.choose(&mut rng).expect("slots");
            let mut text = template.replace("{}", slot);
            if rng.random_bool(0.2) {
                text = format!("{} please", text);
            } else if rng.random_bool(0.15) {
                text = format!("hey {text}");
            }
            samples.push(ClassificationSample::new(text, intent.label)?);
        }
    }
    Corpus::new(samples)
}

/// Corpus where each class draws its words from a private vocabulary.
pub fn separable_corpus(n_classes: usize, per_class: usize, seed: u64) -> Result<ClassificationCorpus> {
    if n_classes < 2 || per_class < 1 {
        return Err(Error::Config("separable_corpus needs >= 2 classes and >= 1 sample".into()));
    }
    let mut rng = seeded(seed, "separable");
    let syllables = ["ka", "lo", "mi", "ru", "ze", "po", "ti", "na", "vo", "sh", "qu", "bex"];
    let mut samples = Vec::with_capacity(n_classes * per_class);
    for c in 0..n_classes {
        let vocab: Vec<String> = (0..12)
            .map(|w| format!("{}{}{}", syllables[c % syllables.len()], syllables[w % syllables.len()], c))
            .collect();
        for _ in 0..per_class {
            let len = rng.random_range(4..8);
            let words: Vec<&str> = (0..len).map(|_| vocab.choose(&mut rng).expect("vocab").as_str()).collect();
            samples.push(ClassificationSample::new(words.join(" "), format!("class_{c}"))?);
        }
    }
    Corpus::new(samples)
}

/// Relabels a `fraction` of samples to a different label. Returns the noisy
/// corpus and the sorted ids that were flipped.
pub fn plant_label_noise(
    corpus: &ClassificationCorpus,
    fraction: f64,
    seed: u64,
) -> Result<(ClassificationCorpus, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("noise fraction must lie in [0, 1], got {fraction}")));
    }
    let labels = corpus.labels();
    let mut rng = seeded(seed, "label-noise");
    let mut ids: Vec<usize> = (0..corpus.len()).collect();
    ids.shuffle(&mut rng);
    let n = (fraction * corpus.len() as f64).round() as usize;
    let mut flipped: Vec<usize> = ids[..n].to_vec();
    flipped.sort_unstable();
    let mut samples = corpus.samples().to_vec();
    for &i in &flipped {
        let others: Vec<&String> = labels.iter().filter(|l| **l != samples[i].label).collect();
        samples[i].label = (*others.choose(&mut rng).expect("two labels")).clone();
    }
    Ok((Corpus::new(samples)?, flipped))
}
