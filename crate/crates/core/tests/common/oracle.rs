//! Naive reference implementations kept independent of the library's math.
#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

/// Semantic side of a hybrid instance: `W` (k×d_e), per-item embeddings
/// (`None` = no content) and the additive weight `α`.
#[derive(Clone, Debug)]
pub struct Semantic {
    pub w: Mat,
    pub e: Vec<Option<Vec<f64>>>,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct Params {
    pub p: Mat,
    pub q: Mat,
    pub sem: Option<Semantic>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for t in 0..a.len() {
        s += a[t] * b[t];
    }
    s
}

fn sq(m: &Mat) -> f64 {
    m.iter().flatten().map(|x| x * x).sum()
}

/// `W·e` by explicit double loop.
pub fn project(w: &Mat, e: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for r in 0..w.len() {
        for c in 0..e.len() {
            out[r] += w[r][c] * e[c];
        }
    }
    out
}

pub fn projected(sem: &Semantic, i: usize) -> Vec<f64> {
    match &sem.e[i] {
        Some(e) => project(&sem.w, e),
        None => vec![0.0; sem.w.len()],
    }
}

pub fn predict(params: &Params, u: usize, i: usize) -> f64 {
    let cf = dot(&params.p[u], &params.q[i]);
    match &params.sem {
        Some(sem) => cf + sem.alpha * dot(&params.p[u], &projected(sem, i)),
        None => cf,
    }
}

/// `1/N Σ [(ŷ−y)² + λ(‖P_u‖² + ‖Q_i‖²)] + λ‖W‖²`.
pub fn loss(params: &Params, data: &[(usize, usize, f64)], lambda: f64) -> f64 {
    let mut total = 0.0;
    for &(u, i, y) in data {
        let e = predict(params, u, i) - y;
        total += e * e + lambda * (dot(&params.p[u], &params.p[u]) + dot(&params.q[i], &params.q[i]));
    }
    let mut loss = total / data.len() as f64;
    if let Some(sem) = &params.sem {
        loss += lambda * sq(&sem.w);
    }
    loss
}

pub fn mse(params: &Params, data: &[(usize, usize, f64)]) -> f64 {
    data.iter().map(|&(u, i, y)| (predict(params, u, i) - y).powi(2)).sum::<f64>() / data.len() as f64
}

/// Gradient of [`loss`] as `(dP, dQ, dW)`.
pub fn gradient(params: &Params, data: &[(usize, usize, f64)], lambda: f64) -> (Mat, Mat, Option<Mat>) {
    let k = params.p[0].len();
    let n = data.len() as f64;
    let mut gp = vec![vec![0.0; k]; params.p.len()];
    let mut gq = vec![vec![0.0; k]; params.q.len()];
    let mut gw = params.sem.as_ref().map(|s| vec![vec![0.0; s.w[0].len()]; k]);
    for &(u, i, y) in data {
        let e = predict(params, u, i) - y;
        let v = match &params.sem {
            Some(sem) => projected(sem, i),
            None => vec![0.0; k],
        };
        let alpha = params.sem.as_ref().map_or(0.0, |s| s.alpha);
        for t in 0..k {
            gp[u][t] += 2.0 / n * (e * (params.q[i][t] + alpha * v[t]) + lambda * params.p[u][t]);
            gq[i][t] += 2.0 / n * (e * params.p[u][t] + lambda * params.q[i][t]);
        }
        if let (Some(gw), Some(sem)) = (gw.as_mut(), &params.sem) {
            if let Some(emb) = &sem.e[i] {
                for r in 0..k {
                    for c in 0..emb.len() {
                        gw[r][c] += 2.0 / n * alpha * e * params.p[u][r] * emb[c];
                    }
                }
            }
        }
    }
    if let (Some(gw), Some(sem)) = (gw.as_mut(), &params.sem) {
        for r in 0..k {
            for c in 0..sem.w[0].len() {
                gw[r][c] += 2.0 * lambda * sem.w[r][c];
            }
        }
    }
    (gp, gq, gw)
}

/// Plain full-batch gradient descent on [`loss`].
pub fn full_batch_gd(mut params: Params, data: &[(usize, usize, f64)], lambda: f64, lr: f64, steps: usize) -> Params {
    for _ in 0..steps {
        let (gp, gq, gw) = gradient(&params, data, lambda);
        for (row, g) in params.p.iter_mut().zip(&gp) {
            for (x, d) in row.iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
        for (row, g) in params.q.iter_mut().zip(&gq) {
            for (x, d) in row.iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
        if let (Some(sem), Some(gw)) = (params.sem.as_mut(), gw) {
            for (row, g) in sem.w.iter_mut().zip(&gw) {
                for (x, d) in row.iter_mut().zip(g) {
                    *x -= lr * d;
                }
            }
        }
    }
    params
}

/// Descending by score, ties by ascending index, after a full sort.
pub fn topk(scores: &[f64], k: usize, exclude: &std::collections::HashSet<usize>) -> Vec<usize> {
    let mut all: Vec<usize> = (0..scores.len()).filter(|i| !exclude.contains(i)).collect();
    all.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    all.truncate(k);
    all
}

/// Per-user hit counting over users with at least one relevant test item.
pub fn precision_recall(
    recs: &std::collections::BTreeMap<usize, Vec<usize>>,
    test: &[(usize, usize, f64)],
    threshold: f64,
) -> Option<(f64, f64)> {
    let users: std::collections::BTreeSet<usize> = test.iter().filter(|t| t.2 >= threshold).map(|t| t.0).collect();
    if users.is_empty() {
        return None;
    }
    let (mut hits, mut recommended, mut relevant) = (0usize, 0usize, 0usize);
    for u in users {
        let mut rel: Vec<usize> = test.iter().filter(|t| t.0 == u && t.2 >= threshold).map(|t| t.1).collect();
        rel.sort_unstable();
        rel.dedup();
        let list = recs.get(&u).cloned().unwrap_or_default();
        for item in &list {
            if rel.contains(item) {
                hits += 1;
            }
        }
        recommended += list.len();
        relevant += rel.len();
    }
    let precision = if recommended == 0 { 0.0 } else { hits as f64 / recommended as f64 };
    Some((precision, hits as f64 / relevant as f64))
}

pub fn coverage(recs: &std::collections::BTreeMap<usize, Vec<usize>>, n_items: usize) -> f64 {
    let mut seen = vec![false; n_items];
    for list in recs.values() {
        for &i in list {
            seen[i] = true;
        }
    }
    seen.iter().filter(|&&s| s).count() as f64 / n_items as f64
}

pub fn rmse(pairs: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for &(p, y) in pairs {
        s += (p - y) * (p - y);
    }
    (s / pairs.len() as f64).sqrt()
}
