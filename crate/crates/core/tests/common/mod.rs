//! Synthetic fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rexfuse::dataset::{IdIndex, InteractionDataset, Interaction, ItemTextCorpus, Rating};

/// At 64 hashed dimensions no filler word shares a bucket with a keyword.
pub const KEYWORDS: [&str; 4] = ["western", "spaceship", "romance", "haunted"];

const FILLER: [&str; 24] = [
    "forest", "film", "night", "city", "journey", "family", "secret", "river", "friend", "summer", "winter", "road",
    "house", "light", "dream", "war", "king", "girl", "boy", "island", "storm", "garden", "letter", "music",
];

fn item_text(rng: &mut ChaCha8Rng, class: usize) -> String {
    let mut words = vec![KEYWORDS[class].to_owned()];
    for _ in 0..4 {
        words.push(FILLER[rng.gen_range(0..FILLER.len())].to_owned());
    }
    words.shuffle(rng);
    words.join(" ")
}

fn index(prefix: &str, n: usize) -> IdIndex {
    IdIndex::from_ids((0..n).map(|k| format!("{prefix}{k}"))).unwrap()
}

/// Keyword-class corpus for the cold-start check.
pub struct ColdStartFixture {
    pub dataset: InteractionDataset,
    pub corpus: ItemTextCorpus,
    pub item_class: Vec<usize>,
    pub user_class: Vec<usize>,
    /// Items with no training interactions, 10 per class.
    pub held_out: Vec<usize>,
}

/// 200 items in 4 keyword classes (50 each); every user likes one class
/// (rating 5) and dislikes the rest (rating 1). Items 40..50 of each class
/// never appear in training. Users rate every warm item of their class and
/// `n_other` random warm items of other classes.
pub fn cold_start_fixture(n_users: usize, n_other: usize, seed: u64) -> ColdStartFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_items = 200;
    let item_class: Vec<usize> = (0..n_items).map(|i| i / 50).collect();
    let held_out: Vec<usize> = (0..n_items).filter(|i| i % 50 >= 40).collect();
    let warm: Vec<usize> = (0..n_items).filter(|i| i % 50 < 40).collect();
    let user_class: Vec<usize> = (0..n_users).map(|u| u % 4).collect();

    let mut train = Vec::new();
    for u in 0..n_users {
        let c = user_class[u];
        for &i in warm.iter().filter(|&&i| item_class[i] == c) {
            train.push(Rating::new(u, i, 5.0));
        }
        let mut others: Vec<usize> = warm.iter().copied().filter(|&i| item_class[i] != c).collect();
        others.shuffle(&mut rng);
        for &i in others.iter().take(n_other) {
            train.push(Rating::new(u, i, 1.0));
        }
    }
    let mut test = Vec::new();
    for u in 0..n_users {
        for &i in &held_out {
            let r = if item_class[i] == user_class[u] { 5.0 } else { 1.0 };
            test.push(Rating::new(u, i, r));
        }
    }
    let corpus = ItemTextCorpus {
        texts: (0..n_items).map(|i| (i, item_text(&mut rng, item_class[i]))).collect(),
        skipped: 0,
    };
    let dataset = InteractionDataset::from_parts(index("u", n_users), index("i", n_items), train, vec![], test).unwrap();
    ColdStartFixture {
        dataset,
        corpus,
        item_class,
        user_class,
        held_out,
    }
}

/// Raw interactions plus item text where ratings mix a latent-factor signal
/// with a keyword-class signal.
pub struct MixedSignalFixture {
    pub interactions: Vec<Interaction>,
    pub texts: Vec<(String, String)>,
}

#[derive(Clone, Copy, Debug)]
pub struct MixedSignalParams {
    pub n_users: usize,
    pub n_items: usize,
    pub per_user: usize,
    /// Zipf-like item popularity instead of uniform draws.
    pub long_tail: bool,
    pub seed: u64,
}

/// Each user rates `per_user` distinct items, drawn uniformly or with
/// Zipf-like popularity. Ratings are
/// `2.5 + 1.5·[class match] + latent affinity + noise`, rounded and clipped
/// to 1..=5.
pub fn mixed_signal_fixture(params: MixedSignalParams) -> MixedSignalFixture {
    let MixedSignalParams {
        n_users,
        n_items,
        per_user,
        long_tail,
        seed,
    } = params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = 3;
    let item_class: Vec<usize> = (0..n_items).map(|_| rng.gen_range(0..4)).collect();
    let user_class: Vec<usize> = (0..n_users).map(|_| rng.gen_range(0..4)).collect();
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let item_z: Vec<Vec<f64>> = (0..n_items).map(|_| (0..latent).map(|_| gauss(&mut rng)).collect()).collect();
    let user_x: Vec<Vec<f64>> = (0..n_users).map(|_| (0..latent).map(|_| gauss(&mut rng)).collect()).collect();

    let popularity: Vec<f64> = (0..n_items)
        .map(|i| if long_tail { 1.0 / (i as f64 + 5.0) } else { 1.0 })
        .collect();

    let dist = rand::distributions::WeightedIndex::new(&popularity).unwrap();

    let mut interactions = Vec::new();
    for u in 0..n_users {
        let truth: Vec<f64> = (0..n_items)
            .map(|i| {
                let affinity: f64 =
                    user_x[u].iter().zip(&item_z[i]).map(|(a, b)| a * b).sum::<f64>() / (latent as f64).sqrt();
                let class = if user_class[u] == item_class[i] { 1.5 } else { 0.0 };
                class + 0.8 * affinity
            })
            .collect();
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < per_user.min(n_items) {
            chosen.insert(rng.sample(&dist));
        }
        let mut chosen: Vec<usize> = chosen.into_iter().collect();
        chosen.shuffle(&mut rng);
        for i in chosen {
            let raw = 2.5 + truth[i] + 0.3 * gauss(&mut rng);
            interactions.push(Interaction {
                user: format!("u{u}"),
                item: format!("i{i}"),
                rating: raw.round().clamp(1.0, 5.0),
                timestamp: None,
            });
        }
    }
    let texts = (0..n_items).map(|i| (format!("i{i}"), item_text(&mut rng, item_class[i]))).collect();
    MixedSignalFixture { interactions, texts }
}

/// Corpus keyed by the dataset's dense item indices.
pub fn corpus_for(texts: &[(String, String)], items: &IdIndex) -> ItemTextCorpus {
    let mut corpus = ItemTextCorpus::default();
    for (id, text) in texts {
        match items.get(id) {
            Some(ix) => {
                corpus.texts.insert(ix, text.clone());
            }
            None => corpus.skipped += 1,
        }
    }
    corpus
}

/// Writes interactions as a `user_id,item_id,rating` CSV.
pub fn write_csv(path: &std::path::Path, interactions: &[Interaction]) {
    let mut text = String::from("user_id,item_id,rating\n");
    for r in interactions {
        text.push_str(&format!("{},{},{}\n", r.user, r.item, r.rating));
    }
    std::fs::write(path, text).unwrap();
}

/// Writes `{"item_id", "text"}` JSON lines.
pub fn write_item_text(path: &std::path::Path, texts: &[(String, String)]) {
    let mut out = String::new();
    for (id, text) in texts {
        out.push_str(&serde_json::json!({ "item_id": id, "text": text }).to_string());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}
