use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

const MAGIC: &[u8; 4] = b"AIRX";
const VERSION: u32 = 1;

/// Item ids with one fused vector each.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    ids: Vec<String>,
    vectors: Matrix,
}

impl DenseIndex {
    pub fn new(ids: Vec<String>, vectors: Matrix) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::Shape(format!("{} ids for {} vectors", ids.len(), vectors.rows())));
        }
        if !vectors.is_finite() {
            return Err(Error::NonFinite("index vectors".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        Ok(Self { ids, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    /// Manifest (H, count), then ids, then the row-major f64 block.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for x in self.vectors.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::invalid("index file", m.to_string());
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not an index file"));
        }
        let mut u32b = [0u8; 4];
        let mut u64b = [0u8; 8];
        bytes.read_exact(&mut u32b).map_err(|_| bad("truncated header"))?;
        if u32::from_le_bytes(u32b) != VERSION {
            return Err(bad("unsupported version"));
        }
        bytes.read_exact(&mut u64b).map_err(|_| bad("truncated header"))?;
        let dim = u64::from_le_bytes(u64b) as usize;
        bytes.read_exact(&mut u64b).map_err(|_| bad("truncated header"))?;
        let count = u64::from_le_bytes(u64b) as usize;
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            bytes.read_exact(&mut u32b).map_err(|_| bad("truncated id list"))?;
            let n = u32::from_le_bytes(u32b) as usize;
            if bytes.len() < n {
                return Err(bad("truncated id list"));
            }
            let (id, rest) = bytes.split_at(n);
            ids.push(String::from_utf8(id.to_vec()).map_err(|_| bad("id is not UTF-8"))?);
            bytes = rest;
        }
        if bytes.len() != dim * count * 8 {
            return Err(bad("vector block has the wrong size"));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(ids, Matrix::from_vec(count, dim, data))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Encodes every item and orders the rows by id.
pub fn build_index<T, I, F>(items: &[T], id: I, mut encode_final: F) -> Result<DenseIndex>
where
    I: Fn(&T) -> &str,
    F: FnMut(&T) -> Result<Vec<f64>>,
{
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| id(&items[a]).cmp(id(&items[b])));
    let mut ids = Vec::with_capacity(items.len());
    let mut data = Vec::new();
    let mut dim = 0;
    for (n, &i) in order.iter().enumerate() {
        let v = encode_final(&items[i])?;
        if n == 0 {
            dim = v.len();
        } else if v.len() != dim {
            return Err(Error::Shape("item vectors differ in length".into()));
        }
        ids.push(id(&items[i]).to_string());
        data.extend(v);
    }
    DenseIndex::new(ids, Matrix::from_vec(order.len(), dim, data))
}

/// Ranked `(item id, score)` pairs, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub hits: Vec<(String, f64)>,
}

impl SearchResult {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|(id, _)| id.as_str())
    }
}

/// Descending score, ties by ascending key.
pub(crate) fn rank_cmp<K: Ord>(a: (f64, K), b: (f64, K)) -> Ordering {
    // partial_cmp first so that 0.0 and -0.0 tie
    b.0.partial_cmp(&a.0)
        .unwrap_or_else(|| b.0.total_cmp(&a.0))
        .then_with(|| a.1.cmp(&b.1))
}

/// Indices of the `k` best scores, ties broken by ascending index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(idx.len());
    let cmp = |&a: &usize, &b: &usize| rank_cmp((scores[a], a), (scores[b], b));
    if k > 0 && k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx.truncate(k);
    idx
}

/// Exact top-`k` by dot product; equal scores rank by ascending id.
pub fn search(index: &DenseIndex, query: &[f64], k: usize) -> Result<SearchResult> {
    if index.is_empty() {
        return Err(Error::Empty("index"));
    }
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if query.len() != index.dim() {
        return Err(Error::Shape(format!("query has {} dims, index {}", query.len(), index.dim())));
    }
    let scores: Vec<f64> = (0..index.len()).map(|i| dot(query, index.vector(i))).collect();
    let mut idx: Vec<usize> = (0..index.len()).collect();
    let k = k.min(idx.len());
    let ids = &index.ids;
    let cmp = |&a: &usize, &b: &usize| rank_cmp((scores[a], &ids[a]), (scores[b], &ids[b]));
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    Ok(SearchResult {
        hits: idx.into_iter().map(|i| (ids[i].clone(), scores[i])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index() -> DenseIndex {
        DenseIndex::new(
            vec!["b".into(), "a".into(), "c".into()],
            Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.5]]),
        )
        .unwrap()
    }

    #[test]
    fn ties_break_by_id() {
        let r = search(&index(), &[1.0, 0.0], 2).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn saturation_and_errors() {
        let r = search(&index(), &[0.0, 1.0], 10).unwrap();
        assert_eq!(r.hits.len(), 3);
        assert_eq!(r.hits[0].0, "c");
        assert!(search(&index(), &[1.0], 1).is_err());
        assert!(search(&index(), &[1.0, 0.0], 0).is_err());
        let empty = DenseIndex::new(vec![], Matrix::zeros(0, 2)).unwrap();
        assert!(matches!(search(&empty, &[1.0, 0.0], 1), Err(Error::Empty(_))));
    }

    #[test]
    fn bytes_round_trip() {
        let idx = index();
        assert_eq!(DenseIndex::from_bytes(&idx.to_bytes()).unwrap(), idx);
        assert!(DenseIndex::from_bytes(&idx.to_bytes()[..20]).is_err());
    }

    #[test]
    fn build_orders_by_id() {
        let items = vec![("z", 1.0), ("m", 2.0)];
        let idx = build_index(&items, |t| t.0, |t| Ok(vec![t.1])).unwrap();
        assert_eq!(idx.ids(), &["m".to_string(), "z".to_string()]);
        let none: Vec<(&str, f64)> = vec![];
        assert!(build_index(&none, |t| t.0, |t| Ok(vec![t.1])).unwrap().is_empty());
    }

    #[test]
    fn top_k_indices_ties() {
        assert_eq!(top_k_indices(&[0.5, 0.9, 0.5, 0.1], 3), vec![1, 0, 2]);
        assert_eq!(top_k_indices(&[0.5], 3), vec![0]);
    }
}
