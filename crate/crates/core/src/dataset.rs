//! Interaction ingestion, dense id indices and seeded train/validation/test splits.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One raw rating event, keyed by external ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// A rating keyed by dense indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

impl Rating {
    pub fn new(user: usize, item: usize, value: f64) -> Self {
        Self { user, item, value }
    }
}

/// Supported interaction file layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// MovieLens-100K `u.data`: `user<TAB>item<TAB>rating<TAB>timestamp`.
    #[value(name = "movielens100k")]
    Movielens100k,
    /// Comma-separated with header `user_id,item_id,rating[,timestamp]`.
    Csv,
}

/// Bidirectional map between external string ids and dense indices `0..n`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdIndex {
    forward: HashMap<String, usize>,
    backward: Vec<String>,
}

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, assigning the next free one if unseen.
    pub fn insert(&mut self, id: &str) -> usize {
        if let Some(&ix) = self.forward.get(id) {
            return ix;
        }
        let ix = self.backward.len();
        self.forward.insert(id.to_owned(), ix);
        self.backward.push(id.to_owned());
        ix
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.forward.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.backward.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.backward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backward.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.backward
    }

    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut index = Self::new();
        for id in ids {
            let id = id.as_ref();
            if index.get(id).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate id {id:?} in index")));
            }
            index.insert(id);
        }
        Ok(index)
    }
}

impl Serialize for IdIndex {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.backward.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IdIndex {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<String>::deserialize(deserializer)?;
        IdIndex::from_ids(ids).map_err(serde::de::Error::custom)
    }
}

/// Indexed interactions partitioned into train, validation and test.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionDataset {
    pub users: IdIndex,
    pub items: IdIndex,
    pub train: Vec<Rating>,
    pub validation: Vec<Rating>,
    pub test: Vec<Rating>,
}

impl InteractionDataset {
    /// Assembles a dataset from explicit partitions, checking every index.
    pub fn from_parts(
        users: IdIndex,
        items: IdIndex,
        train: Vec<Rating>,
        validation: Vec<Rating>,
        test: Vec<Rating>,
    ) -> Result<Self> {
        for r in train.iter().chain(&validation).chain(&test) {
            if r.user >= users.len() {
                return Err(Error::IndexOutOfRange {
                    kind: "user",
                    index: r.user,
                    size: users.len(),
                });
            }
            if r.item >= items.len() {
                return Err(Error::IndexOutOfRange {
                    kind: "item",
                    index: r.item,
                    size: items.len(),
                });
            }
            if !r.value.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite rating {}", r.value)));
            }
        }
        Ok(Self {
            users,
            items,
            train,
            validation,
            test,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Number of training interactions per item.
    pub fn item_train_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for r in &self.train {
            counts[r.item] += 1;
        }
        counts
    }

    /// Sorted, deduplicated training items for each user.
    pub fn train_items_by_user(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![Vec::new(); self.n_users()];
        for r in &self.train {
            seen[r.user].push(r.item);
        }
        for items in &mut seen {
            items.sort_unstable();
            items.dedup();
        }
        seen
    }
}

/// Item text keyed by dense item index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ItemTextCorpus {
    pub texts: BTreeMap<usize, String>,
    /// Lines whose `item_id` was not in the item index.
    pub skipped: usize,
}

impl ItemTextCorpus {
    pub fn text(&self, item: usize) -> &str {
        self.texts.get(&item).map_or("", String::as_str)
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads interactions in file order.
pub fn load_interactions(path: impl AsRef<Path>, format: DataFormat) -> Result<Vec<Interaction>> {
    let path = path.as_ref();
    let content = read_file(path)?;
    let out = match format {
        DataFormat::Movielens100k => parse_movielens(path, &content)?,
        DataFormat::Csv => parse_csv(path, &content)?,
    };
    if out.is_empty() {
        return Err(Error::EmptyFile(path.to_owned()));
    }
    Ok(out)
}

fn parse_rating(path: &Path, line: usize, field: &str) -> Result<f64> {
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("non-numeric rating {field:?}")))?;
    if !value.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite rating {field:?}")));
    }
    Ok(value)
}

fn parse_timestamp(path: &Path, line: usize, field: &str) -> Result<i64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("non-integer timestamp {field:?}")))
}

fn check_id(path: &Path, line: usize, what: &str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::parse(path, line, format!("empty {what} id")));
    }
    Ok(())
}

fn parse_movielens(path: &Path, content: &str) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (n, raw) in content.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.trim_end_matches('\r').split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        check_id(path, line, "user", user)?;
        check_id(path, line, "item", item)?;
        out.push(Interaction {
            user: user.to_owned(),
            item: item.to_owned(),
            rating: parse_rating(path, line, fields[2])?,
            timestamp: Some(parse_timestamp(path, line, fields[3])?),
        });
    }
    Ok(out)
}

fn parse_csv(path: &Path, content: &str) -> Result<Vec<Interaction>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(content.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile(path.to_owned()));
    }
    let names: Vec<&str> = headers.iter().collect();
    let expected: &[&str] = match names.len() {
        3 => &["user_id", "item_id", "rating"],
        4 => &["user_id", "item_id", "rating", "timestamp"],
        _ => &[],
    };
    if names != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header user_id,item_id,rating[,timestamp], found {}", names.join(",")),
        ));
    }
    let width = names.len();

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::parse(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        check_id(path, line, "user", &record[0])?;
        check_id(path, line, "item", &record[1])?;
        let timestamp = if width == 4 && !record[3].is_empty() {
            Some(parse_timestamp(path, line, &record[3])?)
        } else {
            None
        };
        out.push(Interaction {
            user: record[0].to_owned(),
            item: record[1].to_owned(),
            rating: parse_rating(path, line, &record[2])?,
            timestamp,
        });
    }
    Ok(out)
}

/// Indexes users and items in first-appearance order, then cuts a seeded
/// uniform permutation at `floor(0.70 N)` and `floor(0.85 N)`.
pub fn build_dataset(interactions: &[Interaction], split_seed: u64) -> Result<InteractionDataset> {
    let n = interactions.len();
    if n < 3 {
        return Err(Error::TooFewInteractions(n));
    }

    let mut users = IdIndex::new();
    let mut items = IdIndex::new();
    let mut ratings = Vec::with_capacity(n);
    for it in interactions {
        if it.user.is_empty() || it.item.is_empty() {
            return Err(Error::InvalidArgument("interaction with empty id".into()));
        }
        if !it.rating.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite rating {}", it.rating)));
        }
        let u = users.insert(&it.user);
        let i = items.insert(&it.item);
        ratings.push(Rating::new(u, i, it.rating));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));

    let (n_train, n_valid) = split_sizes(n);
    let pick = |range: std::ops::Range<usize>| -> Vec<Rating> {
        order[range].iter().map(|&ix| ratings[ix]).collect()
    };
    let train = pick(0..n_train);
    let validation = pick(n_train..n_train + n_valid);
    let test = pick(n_train + n_valid..n);

    Ok(InteractionDataset {
        users,
        items,
        train,
        validation,
        test,
    })
}

/// `(|train|, |validation|)` for `n` interactions; test gets the remainder.
pub fn split_sizes(n: usize) -> (usize, usize) {
    // Integer arithmetic keeps the cut points exact: floor(0.70 n) and floor(0.85 n).
    let train = n * 70 / 100;
    let train_and_valid = n * 85 / 100;
    (train, train_and_valid - train)
}

#[derive(Deserialize)]
struct TextLine {
    item_id: String,
    text: String,
}

/// Reads `{"item_id": ..., "text": ...}` JSON lines; unknown ids are skipped and counted.
pub fn load_item_text(path: impl AsRef<Path>, items: &IdIndex) -> Result<ItemTextCorpus> {
    let path = path.as_ref();
    let content = read_file(path)?;
    let mut corpus = ItemTextCorpus::default();
    for (n, raw) in content.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let rec: TextLine =
            serde_json::from_str(raw).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        match items.get(&rec.item_id) {
            Some(ix) => {
                corpus.texts.insert(ix, rec.text);
            }
            None => {
                log::warn!("{}: line {}: unknown item_id {:?}, skipped", path.display(), n + 1, rec.item_id);
                corpus.skipped += 1;
            }
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn synth(n: usize) -> Vec<Interaction> {
        (0..n)
            .map(|k| Interaction {
                user: format!("u{}", k % 7),
                item: format!("i{}", k % 11),
                rating: (k % 5) as f64 + 1.0,
                timestamp: None,
            })
            .collect()
    }

    #[test]
    fn movielens_line_maps_fields() {
        let f = write_tmp("196\t242\t3\t881250949\n");
        let got = load_interactions(f.path(), DataFormat::Movielens100k).unwrap();
        assert_eq!(
            got,
            vec![Interaction {
                user: "196".into(),
                item: "242".into(),
                rating: 3.0,
                timestamp: Some(881250949),
            }]
        );
    }

    #[test]
    fn movielens_wrong_field_count_names_line() {
        let f = write_tmp("1\t2\t3\t4\n\n5\t6\t7\n");
        let err = load_interactions(f.path(), DataFormat::Movielens100k).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn csv_without_timestamp() {
        let f = write_tmp("user_id,item_id,rating\nu1,i1,4.5\n");
        let got = load_interactions(f.path(), DataFormat::Csv).unwrap();
        assert_eq!(
            got,
            vec![Interaction {
                user: "u1".into(),
                item: "i1".into(),
                rating: 4.5,
                timestamp: None,
            }]
        );
    }

    #[test]
    fn csv_with_timestamp() {
        let f = write_tmp("user_id,item_id,rating,timestamp\nu1,i1,2,17\n");
        let got = load_interactions(f.path(), DataFormat::Csv).unwrap();
        assert_eq!(got[0].timestamp, Some(17));
    }

    #[test]
    fn csv_non_numeric_rating_cites_line_2() {
        let f = write_tmp("user_id,item_id,rating\nu1,i1,abc\n");
        let err = load_interactions(f.path(), DataFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn csv_bad_header_is_rejected() {
        let f = write_tmp("a,b,c\nu1,i1,3\n");
        assert!(load_interactions(f.path(), DataFormat::Csv).is_err());
    }

    #[test]
    fn empty_files_are_errors() {
        let f = write_tmp("");
        assert!(matches!(
            load_interactions(f.path(), DataFormat::Movielens100k),
            Err(Error::EmptyFile(_))
        ));
        assert!(matches!(
            load_interactions(f.path(), DataFormat::Csv),
            Err(Error::EmptyFile(_))
        ));
        let header_only = write_tmp("user_id,item_id,rating\n");
        assert!(matches!(
            load_interactions(header_only.path(), DataFormat::Csv),
            Err(Error::EmptyFile(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_interactions("/nonexistent/u.data", DataFormat::Movielens100k).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let ds = build_dataset(&synth(100), 1).unwrap();
        assert_eq!((ds.train.len(), ds.validation.len(), ds.test.len()), (70, 15, 15));
        let ds = build_dataset(&synth(10), 1).unwrap();
        assert_eq!((ds.train.len(), ds.validation.len(), ds.test.len()), (7, 1, 2));
    }

    #[test]
    fn fewer_than_three_is_an_error() {
        assert!(matches!(build_dataset(&synth(2), 0), Err(Error::TooFewInteractions(2))));
    }

    #[test]
    fn same_seed_same_split() {
        let data = synth(50);
        let a = build_dataset(&data, 9).unwrap();
        let b = build_dataset(&data, 9).unwrap();
        assert_eq!(a, b);
        let c = build_dataset(&data, 10).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn indices_follow_first_appearance() {
        let ds = build_dataset(&synth(20), 3).unwrap();
        assert_eq!(ds.users.id(0), Some("u0"));
        assert_eq!(ds.users.id(6), Some("u6"));
        assert_eq!(ds.items.get("i10"), Some(10));
    }

    #[test]
    fn item_text_maps_to_dense_index() {
        let mut items = IdIndex::new();
        for k in 0..7 {
            items.insert(&format!("x{k}"));
        }
        items.insert("242");
        let f = write_tmp("{\"item_id\":\"242\",\"text\":\"A quiet drama.\"}\n{\"item_id\":\"zzz\",\"text\":\"?\"}\n");
        let corpus = load_item_text(f.path(), &items).unwrap();
        assert_eq!(corpus.texts.get(&7).map(String::as_str), Some("A quiet drama."));
        assert_eq!(corpus.skipped, 1);
        assert_eq!(corpus.text(0), "");
    }

    #[test]
    fn item_text_empty_file_and_bad_json() {
        let items = IdIndex::from_ids(["a"]).unwrap();
        let f = write_tmp("");
        let corpus = load_item_text(f.path(), &items).unwrap();
        assert!(corpus.texts.is_empty());

        let f = write_tmp("{\"item_id\":\"a\",\"text\":\"ok\"}\n{not json\n");
        let err = load_item_text(f.path(), &items).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    fn arb_interactions() -> impl Strategy<Value = Vec<Interaction>> {
        prop::collection::vec((0u8..6, 0u8..9, 1u8..=5), 3..120).prop_map(|v| {
            v.into_iter()
                .map(|(u, i, r)| Interaction {
                    user: format!("u{u}"),
                    item: format!("i{i}"),
                    rating: r as f64,
                    timestamp: None,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn split_partitions_input(data in arb_interactions(), seed in any::<u64>()) {
            let ds = build_dataset(&data, seed).unwrap();
            let n = data.len();
            prop_assert_eq!(ds.train.len(), n * 70 / 100);
            prop_assert_eq!(ds.validation.len(), n * 85 / 100 - n * 70 / 100);
            prop_assert_eq!(ds.train.len() + ds.validation.len() + ds.test.len(), n);

            let key = |u: &str, i: &str, r: f64| (u.to_owned(), i.to_owned(), r.to_bits());
            let mut input: Vec<_> = data.iter().map(|x| key(&x.user, &x.item, x.rating)).collect();
            let mut output: Vec<_> = ds.train.iter().chain(&ds.validation).chain(&ds.test)
                .map(|r| key(ds.users.id(r.user).unwrap(), ds.items.id(r.item).unwrap(), r.value))
                .collect();
            input.sort();
            output.sort();
            prop_assert_eq!(input, output);

            for id in ds.users.ids() {
                prop_assert_eq!(ds.users.id(ds.users.get(id).unwrap()), Some(id.as_str()));
            }
            prop_assert_eq!(build_dataset(&data, seed).unwrap(), ds);
        }
    }
}
