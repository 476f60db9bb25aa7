//! Nearest-neighbour and CSLS retrieval, Precision@k and word translation.
//!
//! Scores are computed block by block: a chunk of queries is multiplied
//! against a block of candidates and each query keeps a running top-k, so
//! the full query-by-candidate score matrix is never materialised. Query
//! chunks run in parallel; every query's result depends only on its own
//! row, so output is identical for any thread count.
//!
//! Rankings are by descending score with ties broken by ascending index.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use log::info;
use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::EvalGroups;
use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::normalize_rows;
use crate::mapper::Mapper;

const QUERY_CHUNK: usize = 64;
const CANDIDATE_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMethod {
    Nn,
    Csls { k: usize },
}

impl RetrievalMethod {
    pub fn label(&self) -> String {
        match self {
            RetrievalMethod::Nn => "nn".to_string(),
            RetrievalMethod::Csls { k } => format!("csls_knn_{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Source to target through the forward flow.
    Forward,
    /// Target to source through the reverse flow of the same model.
    Reverse,
}

/// Precision@k of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub direction: Direction,
    pub method: String,
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub p_at_10: f64,
    pub queries: usize,
    pub src_oov: usize,
    pub tgt_oov: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// One ranked hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub score: f64,
}

fn better(a: &Hit, b: &Hit) -> bool {
    match a.score.partial_cmp(&b.score) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => a.index < b.index,
        _ => false,
    }
}

fn push_top(list: &mut Vec<Hit>, hit: Hit, k: usize) {
    if list.len() == k && !better(&hit, list.last().expect("k >= 1")) {
        return;
    }
    let pos = list.iter().position(|h| better(&hit, h)).unwrap_or(list.len());
    list.insert(pos, hit);
    list.truncate(k);
}

/// Top-`k` candidates per query by `query . candidate + bias[candidate]`.
///
/// Inputs are used as given (no normalization).
pub fn top_k_dot(
    queries: ArrayView2<f64>,
    candidates: ArrayView2<f64>,
    k: usize,
    bias: Option<&[f64]>,
) -> Result<Vec<Vec<Hit>>> {
    if queries.ncols() != candidates.ncols() {
        return Err(Error::Shape(format!(
            "queries have {} columns, candidates {}",
            queries.ncols(),
            candidates.ncols()
        )));
    }
    if k == 0 || k > candidates.nrows() {
        return Err(Error::KTooLarge {
            k,
            available: candidates.nrows(),
        });
    }
    if let Some(b) = bias {
        assert_eq!(b.len(), candidates.nrows(), "one bias per candidate");
    }

    let chunks: Vec<usize> = (0..queries.nrows()).step_by(QUERY_CHUNK).collect();
    let per_chunk: Vec<Vec<Vec<Hit>>> = chunks
        .par_iter()
        .map(|&start| {
            let end = (start + QUERY_CHUNK).min(queries.nrows());
            let q = queries.slice(s![start..end, ..]);
            let mut tops: Vec<Vec<Hit>> = vec![Vec::with_capacity(k + 1); end - start];
            for cstart in (0..candidates.nrows()).step_by(CANDIDATE_BLOCK) {
                let cend = (cstart + CANDIDATE_BLOCK).min(candidates.nrows());
                let scores = q.dot(&candidates.slice(s![cstart..cend, ..]).t());
                for (row, top) in scores.rows().into_iter().zip(tops.iter_mut()) {
                    for (j, &sc) in row.iter().enumerate() {
                        let index = cstart + j;
                        let score = match bias {
                            Some(b) => sc + b[index],
                            None => sc,
                        };
                        push_top(top, Hit { index, score }, k);
                    }
                }
            }
            tops
        })
        .collect();
    Ok(per_chunk.into_iter().flatten().collect())
}

/// Mean cosine similarity of every row of `rows` to its `k` nearest rows of `pool`.
///
/// Both inputs must already be unit-normalized.
pub fn mean_neighbor_similarity(rows: ArrayView2<f64>, pool: ArrayView2<f64>, k: usize) -> Result<Vec<f64>> {
    Ok(top_k_dot(rows, pool, k, None)?
        .into_iter()
        .map(|hits| hits.iter().map(|h| h.score).sum::<f64>() / k as f64)
        .collect())
}

/// Cosine nearest neighbours.
pub fn nn_retrieve(queries: ArrayView2<f64>, targets: ArrayView2<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    let q = normalize_rows(queries);
    let t = normalize_rows(targets);
    Ok(indices(top_k_dot(q.view(), t.view(), k, None)?))
}

/// CSLS retrieval: score `2 cos(q, t) - r_T(q) - r_S(t)`.
///
/// `r_T(q)` is the mean cosine of `q` to its `k` nearest targets and `r_S(t)`
/// the mean cosine of `t` to its `k` nearest rows of `source_pool` (mapped
/// source vectors). The same `k` sets the neighbourhoods and the result length.
pub fn csls_retrieve(
    queries: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    source_pool: ArrayView2<f64>,
    k: usize,
) -> Result<Vec<Vec<usize>>> {
    Ok(indices(csls_rank(queries, targets, source_pool, k, k)?))
}

/// CSLS ranking with neighbourhood size `knn` returning the best `top` targets.
pub fn csls_rank(
    queries: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    source_pool: ArrayView2<f64>,
    knn: usize,
    top: usize,
) -> Result<Vec<Vec<Hit>>> {
    if source_pool.nrows() == 0 {
        return Err(Error::Empty("CSLS source pool"));
    }
    if knn > source_pool.nrows() {
        return Err(Error::KTooLarge {
            k: knn,
            available: source_pool.nrows(),
        });
    }
    let q = normalize_rows(queries);
    let t = normalize_rows(targets);
    let sp = normalize_rows(source_pool);
    let r_target = mean_neighbor_similarity(q.view(), t.view(), knn)?;
    let r_source = mean_neighbor_similarity(t.view(), sp.view(), knn)?;
    // 2 q.t - r_S(t) ranked via a scaled query; r_T(q) is constant per query.
    let q2 = &q * 2.0;
    let neg_rs: Vec<f64> = r_source.iter().map(|r| -r).collect();
    let mut ranked = top_k_dot(q2.view(), t.view(), top, Some(&neg_rs))?;
    for (hits, rt) in ranked.iter_mut().zip(&r_target) {
        for h in hits.iter_mut() {
            h.score -= rt;
        }
    }
    Ok(ranked)
}

fn indices(hits: Vec<Vec<Hit>>) -> Vec<Vec<usize>> {
    hits.into_iter()
        .map(|v| v.into_iter().map(|h| h.index).collect())
        .collect()
}

/// Rank `top` candidates for already-mapped queries.
fn rank(
    mapped_queries: ArrayView2<f64>,
    candidates: ArrayView2<f64>,
    mapped_pool: impl FnOnce() -> Result<Array2<f64>>,
    method: RetrievalMethod,
    top: usize,
) -> Result<Vec<Vec<usize>>> {
    match method {
        RetrievalMethod::Nn => nn_retrieve(mapped_queries, candidates, top),
        RetrievalMethod::Csls { k } => {
            let pool = mapped_pool()?;
            Ok(indices(csls_rank(mapped_queries, candidates, pool.view(), k, top)?))
        }
    }
}

/// Precision@{1,5,10} of `mapper` on `groups`.
///
/// `src`/`tgt` are the model's source and target sets. For
/// [`Direction::Forward`] the group keys index `src` and the values `tgt`;
/// for [`Direction::Reverse`] keys index `tgt`, values index `src`, and
/// queries go through the reverse flow. `pool` caps the CSLS `r_S` pool to
/// the first rows of the mapped query-side vocabulary.
pub fn precision_at_k(
    mapper: &Mapper,
    direction: Direction,
    groups: &EvalGroups,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    method: RetrievalMethod,
    pool: Option<usize>,
) -> Result<EvalReport> {
    if groups.is_empty() {
        return Err(Error::Empty("evaluation groups"));
    }
    let start = Instant::now();
    let (query_set, cand_set) = match direction {
        Direction::Forward => (src, tgt),
        Direction::Reverse => (tgt, src),
    };
    let flow = |x: ArrayView2<f64>| match direction {
        Direction::Forward => mapper.forward(x),
        Direction::Reverse => mapper.reverse(x),
    };

    let query_idx: Vec<usize> = groups.keys().copied().collect();
    let mapped = flow(query_set.rows(&query_idx).view())?;
    let top = 10.min(cand_set.len());
    let pool_rows = pool.unwrap_or(usize::MAX).min(query_set.len());
    let ranked = rank(
        mapped.view(),
        cand_set.matrix(),
        || flow(query_set.matrix().slice(s![..pool_rows, ..])),
        method,
        top,
    )?;

    let mut hits = [0usize; 3];
    for (q, ranking) in query_idx.iter().zip(&ranked) {
        let valid = &groups[q];
        let first = ranking.iter().position(|t| valid.contains(t));
        for (slot, k) in [1usize, 5, 10].into_iter().enumerate() {
            if matches!(first, Some(p) if p < k) {
                hits[slot] += 1;
            }
        }
    }
    let n = query_idx.len() as f64;
    let report = EvalReport {
        direction,
        method: method.label(),
        p_at_1: hits[0] as f64 / n,
        p_at_5: hits[1] as f64 / n,
        p_at_10: hits[2] as f64 / n,
        queries: query_idx.len(),
        src_oov: 0,
        tgt_oov: 0,
        elapsed: start.elapsed(),
    };
    debug_assert!(report.p_at_1 <= report.p_at_5 && report.p_at_5 <= report.p_at_10);
    info!(
        "{:?} {}: P@1 {:.4} over {} queries in {:.2?}",
        direction, report.method, report.p_at_1, report.queries, report.elapsed
    );
    Ok(report)
}

/// Ranked translations of `words`; `None` for out-of-vocabulary words.
pub fn translate(
    mapper: &Mapper,
    words: &[&str],
    direction: Direction,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    method: RetrievalMethod,
    k: usize,
) -> Result<Vec<Option<Vec<String>>>> {
    let (query_set, cand_set) = match direction {
        Direction::Forward => (src, tgt),
        Direction::Reverse => (tgt, src),
    };
    let found: Vec<Option<usize>> = words.iter().map(|w| query_set.lookup(w)).collect();
    let present: Vec<usize> = found.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(vec![None; words.len()]);
    }
    let flow = |x: ArrayView2<f64>| match direction {
        Direction::Forward => mapper.forward(x),
        Direction::Reverse => mapper.reverse(x),
    };
    let mapped = flow(query_set.rows(&present).view())?;
    let ranked = rank(mapped.view(), cand_set.matrix(), || flow(query_set.matrix()), method, k)?;
    let mut ranked = ranked.into_iter();
    Ok(found
        .into_iter()
        .map(|f| {
            f.map(|_| {
                ranked
                    .next()
                    .expect("one ranking per present word")
                    .into_iter()
                    .map(|i| cand_set.word(i).to_string())
                    .collect()
            })
        })
        .collect())
}

/// Mean over rows of `||reverse(forward(x)) - x|| / ||x||`.
pub fn cycle_error(mapper: &Mapper, x: ArrayView2<f64>) -> Result<f64> {
    let back = mapper.reverse(mapper.forward(x)?.view())?;
    let diff = &back - &x;
    let num = diff.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let den = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    Ok(num.iter().zip(den.iter()).map(|(a, b)| a / b).sum::<f64>() / x.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cos(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
    }

    fn brute_nn(q: &Array2<f64>, t: &Array2<f64>, k: usize) -> Vec<Vec<usize>> {
        q.rows()
            .into_iter()
            .map(|qr| {
                let mut s: Vec<(f64, usize)> = t.rows().into_iter().enumerate().map(|(j, tr)| (cos(qr, tr), j)).collect();
                s.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                s.into_iter().take(k).map(|x| x.1).collect()
            })
            .collect()
    }

    #[test]
    fn exact_match_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = gaussian(20, 5, &mut rng);
        let q = t.slice(s![7..8, ..]).to_owned();
        assert_eq!(nn_retrieve(q.view(), t.view(), 3).unwrap()[0][0], 7);
    }

    #[test]
    fn orthonormal_targets() {
        let t = Array2::<f64>::eye(6);
        let q = t.slice(s![3..4, ..]).to_owned();
        assert_eq!(nn_retrieve(q.view(), t.view(), 6).unwrap()[0], vec![3, 0, 1, 2, 4, 5]);
    }

    #[test]
    fn nn_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = gaussian(30, 8, &mut rng);
        let q = gaussian(10, 8, &mut rng);
        assert_eq!(nn_retrieve(q.view(), t.view(), 5).unwrap(), brute_nn(&q, &t, 5));
    }

    #[test]
    fn nn_errors() {
        let t = Array2::<f64>::eye(3);
        assert!(matches!(nn_retrieve(t.view(), t.view(), 4), Err(Error::KTooLarge { .. })));
        assert!(matches!(
            nn_retrieve(Array2::zeros((1, 2)).view(), t.view(), 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn csls_single_target() {
        let q = array![[0.3, -1.0]];
        let t = array![[1.0, 0.5]];
        assert_eq!(csls_retrieve(q.view(), t.view(), q.view(), 1).unwrap(), vec![vec![0]]);
    }

    #[test]
    fn csls_demotes_hub() {
        // Target 3 is the nearest neighbour of three of the four queries;
        // with k = 2 CSLS sends query 3 to target 0 instead.
        let q = normalize_rows(array![[-1.0, -0.8], [-0.6, -0.2], [-0.1, 0.8], [-0.4, -1.0]].view());
        let t = normalize_rows(array![[0.7, -0.9], [-0.8, 0.9], [0.5, -0.3], [-0.7, -0.2]].view());
        let nn: Vec<usize> = nn_retrieve(q.view(), t.view(), 1).unwrap().iter().map(|r| r[0]).collect();
        let cs: Vec<usize> = csls_retrieve(q.view(), t.view(), q.view(), 2).unwrap().iter().map(|r| r[0]).collect();
        assert_eq!(nn, vec![3, 3, 1, 3]);
        assert_eq!(cs, vec![3, 3, 1, 0]);
    }

    #[test]
    fn top_k_is_sorted_with_index_ties() {
        let q = array![[1.0, 0.0]];
        let t = array![[0.5, 0.0], [1.0, 0.0], [0.5, 1.0], [1.0, 3.0]];
        let hits = top_k_dot(q.view(), t.view(), 4, None).unwrap();
        let idx: Vec<usize> = hits[0].iter().map(|h| h.index).collect();
        assert_eq!(idx, vec![1, 3, 0, 2]);
    }

    #[test]
    fn translate_reports_oov() {
        let src = EmbeddingSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            Array2::eye(3),
            "s",
        )
        .unwrap();
        let tgt = EmbeddingSet::new(
            vec!["x".into(), "y".into(), "z".into()],
            Array2::eye(3),
            "t",
        )
        .unwrap();
        let m = Mapper::linear(Array2::eye(3)).unwrap();
        let out = translate(&m, &["b", "nope", "c"], Direction::Forward, &src, &tgt, RetrievalMethod::Nn, 2).unwrap();
        assert_eq!(out[0].as_deref().unwrap()[0], "y");
        assert_eq!(out[0].as_ref().unwrap().len(), 2);
        assert!(out[1].is_none());
        assert_eq!(out[2].as_deref().unwrap()[0], "z");
        let rev = translate(&m, &["x"], Direction::Reverse, &src, &tgt, RetrievalMethod::Nn, 1).unwrap();
        assert_eq!(rev[0].as_deref().unwrap(), &["a".to_string()]);
    }
}
