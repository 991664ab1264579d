//! Item text embeddings and the projection into the latent factor space.
//!
//! An [`EmbeddingProvider`] turns item text into a fixed-length vector. The
//! built-in [`HashedBow`] provider is a signed feature-hashing bag of words,
//! fully deterministic across platforms. Vectors produced by any external
//! model can be loaded with [`load_embeddings_file`] instead.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{IdIndex, ItemTextCorpus};
use crate::linalg::{l2_norm, Matrix};
use crate::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed hashed bag-of-words embedding, L2-normalized.
///
/// Each token adds `+1` (top hash bit clear) or `-1` (top bit set) to bucket
/// `fnv1a64(token) % dim`. An all-zero accumulator stays all-zero.
pub fn embed_hashed_bow(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = l2_norm(&v);
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Maps item text to a semantic vector.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashedBow {
    dim: usize,
}

impl HashedBow {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(Self { dim })
    }
}

impl EmbeddingProvider for HashedBow {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        embed_hashed_bow(text, self.dim)
    }
}

/// Per-item semantic vectors; items without content have no entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct ItemEmbeddingTable {
    dim: usize,
    vectors: Vec<Option<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    d_e: usize,
    n_items: usize,
    vectors: Vec<(usize, Vec<f64>)>,
}

impl TryFrom<TableRepr> for ItemEmbeddingTable {
    type Error = Error;

    fn try_from(repr: TableRepr) -> Result<Self> {
        let mut table = ItemEmbeddingTable::new(repr.d_e, repr.n_items)?;
        for (item, v) in repr.vectors {
            table.insert(item, v)?;
        }
        Ok(table)
    }
}

impl From<ItemEmbeddingTable> for TableRepr {
    fn from(t: ItemEmbeddingTable) -> Self {
        TableRepr {
            d_e: t.dim,
            n_items: t.vectors.len(),
            vectors: t
                .vectors
                .into_iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| (i, v)))
                .collect(),
        }
    }
}

impl ItemEmbeddingTable {
    pub fn new(dim: usize, n_items: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            vectors: vec![None; n_items],
        })
    }

    /// Embeds every item that has an entry in `corpus`.
    pub fn from_corpus(corpus: &ItemTextCorpus, n_items: usize, provider: &dyn EmbeddingProvider) -> Result<Self> {
        let mut table = Self::new(provider.dim(), n_items)?;
        for (&item, text) in &corpus.texts {
            table.insert(item, provider.embed(text))?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, item: usize, vector: Vec<f64>) -> Result<()> {
        if item >= self.vectors.len() {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: item,
                size: self.vectors.len(),
            });
        }
        if vector.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding for item {item} has length {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("embedding for item {item} is not finite")));
        }
        self.vectors[item] = Some(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_items(&self) -> usize {
        self.vectors.len()
    }

    pub fn get(&self, item: usize) -> Option<&[f64]> {
        self.vectors.get(item).and_then(|v| v.as_deref())
    }

    /// Number of items that carry a vector.
    pub fn len(&self) -> usize {
        self.vectors.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Result of [`load_embeddings_file`].
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedEmbeddings {
    pub table: ItemEmbeddingTable,
    pub skipped: usize,
}

#[derive(Deserialize)]
struct VectorLine {
    item_id: String,
    vector: Vec<f64>,
}

/// Loads `{"item_id": ..., "vector": [...]}` JSON lines.
///
/// The first record fixes the dimension. Records for ids missing from `items`
/// are skipped and counted.
pub fn load_embeddings_file(path: impl AsRef<Path>, items: &IdIndex) -> Result<LoadedEmbeddings> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: Option<ItemEmbeddingTable> = None;
    let mut skipped = 0;
    for (n, raw) in content.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: VectorLine =
            serde_json::from_str(raw).map_err(|e| Error::parse(path, line, e.to_string()))?;
        if rec.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(path, line, "non-finite vector component"));
        }
        let table = match &mut table {
            Some(t) => t,
            None => {
                if rec.vector.is_empty() {
                    return Err(Error::parse(path, line, "empty vector"));
                }
                table.insert(ItemEmbeddingTable::new(rec.vector.len(), items.len())?)
            }
        };
        if rec.vector.len() != table.dim() {
            return Err(Error::parse(
                path,
                line,
                format!("vector has length {}, expected {}", rec.vector.len(), table.dim()),
            ));
        }
        match items.get(&rec.item_id) {
            Some(ix) => table.insert(ix, rec.vector)?,
            None => {
                log::warn!("{}: line {line}: unknown item_id {:?}, skipped", path.display(), rec.item_id);
                skipped += 1;
            }
        }
    }
    let table = table.ok_or_else(|| Error::EmptyFile(path.to_owned()))?;
    Ok(LoadedEmbeddings { table, skipped })
}

/// Learned linear map `W` (k × d_e) from embedding space into latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Projection {
    pub weights: Matrix,
}

impl Projection {
    pub fn new(weights: Matrix) -> Result<Self> {
        if !weights.is_finite() {
            return Err(Error::InvalidArgument("projection has non-finite entries".into()));
        }
        Ok(Self { weights })
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.weights.cols()
    }

    /// `W · e`.
    pub fn project(&self, e: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.embedding_dim() {
            return Err(Error::ShapeMismatch(format!(
                "embedding has length {}, projection expects {}",
                e.len(),
                self.embedding_dim()
            )));
        }
        let mut out = vec![0.0; self.latent_dim()];
        self.weights.mul_vec_into(e, &mut out);
        Ok(out)
    }
}
