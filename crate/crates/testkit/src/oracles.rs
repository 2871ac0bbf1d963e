//! Reference computations written straight from the definitions, on plain
//! vectors, so they share nothing with the code under test.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Slope and intercept from the 2x2 normal equations, solved by Cramer's
/// rule. Abscissae are shifted by an integer so their sums stay exact, and
/// the y-sums use compensated summation.
pub fn normal_equations(points: &[(f64, f64)]) -> (f64, f64) {
    let x0 = points[0].0.floor();
    let n = points.len() as f64;
    let (mut sx, mut sxx) = (0.0, 0.0);
    let (mut sy, mut cy, mut sxy, mut cxy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let neumaier = |s: &mut f64, c: &mut f64, v: f64| {
        let t = *s + v;
        if s.abs() >= v.abs() {
            *c += (*s - t) + v;
        } else {
            *c += (v - t) + *s;
        }
        *s = t;
    };
    for &(x, y) in points {
        let u = x - x0;
        sx += u;
        sxx += u * u;
        neumaier(&mut sy, &mut cy, y);
        neumaier(&mut sxy, &mut cxy, u * y);
    }
    let (sy, sxy) = (sy + cy, sxy + cxy);
    let det = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / det;
    let a_shifted = (sxx * sy - sx * sxy) / det;
    (b, a_shifted - b * x0)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Neighbourhood score of every column for row `u` of a dense user ×
/// location weight matrix, using the `k` most similar positive neighbours
/// (ties to the lower row).
pub fn cf_scores(w: &[Vec<f64>], u: usize, k: usize) -> Vec<f64> {
    let mut sims: Vec<(usize, f64)> = (0..w.len())
        .filter(|&v| v != u)
        .map(|v| (v, cosine(&w[u], &w[v])))
        .filter(|p| p.1 > 0.0)
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(k);
    let den: f64 = sims.iter().map(|p| p.1).sum();
    (0..w[u].len())
        .map(|j| {
            if den == 0.0 {
                0.0
            } else {
                sims.iter().map(|&(v, s)| s * w[v][j]).sum::<f64>() / den
            }
        })
        .collect()
}

/// Best unvisited column for row `u` at λ = 0: neighbourhood score, or
/// column popularity for a row with no interactions. Ties to the lower
/// column; `None` when every column is visited.
pub fn cf_top1(w: &[Vec<f64>], u: usize) -> Option<usize> {
    let cold = w[u].iter().all(|&x| x == 0.0);
    let scores: Vec<f64> = if cold {
        (0..w[u].len()).map(|j| w.iter().map(|r| r[j]).sum()).collect()
    } else {
        cf_scores(w, u, usize::MAX)
    };
    let cands: Vec<usize> = (0..w[u].len()).filter(|&j| w[u][j] == 0.0).collect();
    let best = cands.iter().map(|&j| scores[j]).fold(f64::NEG_INFINITY, f64::max);
    cands.into_iter().find(|&j| scores[j] >= best - 1e-12)
}

/// Up to 5×5 weights drawn from {0, 1, 2}.
pub fn random_weights(rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = rng.random_range(1..=5);
    let m = rng.random_range(1..=5);
    (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0..=2) as f64).collect())
        .collect()
}

/// Cheapest simple path from `s` to `t` over undirected `(a, b, cost)`
/// edges by exhaustive depth-first enumeration, each parallel edge tried
/// separately. Equal costs resolve to the lexicographically smallest node
/// sequence.
pub fn cheapest_simple_path(edges: &[(usize, usize, f64)], s: usize, t: usize) -> Option<(f64, Vec<usize>)> {
    fn dfs(
        edges: &[(usize, usize, f64)],
        at: usize,
        t: usize,
        path: &mut Vec<usize>,
        cost: f64,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if at == t {
            let better = match best {
                None => true,
                Some((c, seq)) => cost < *c || (cost == *c && path < seq),
            };
            if better {
                *best = Some((cost, path.clone()));
            }
            return;
        }
        for &(a, b, c) in edges {
            let next = if a == at {
                b
            } else if b == at {
                a
            } else {
                continue;
            };
            if path.contains(&next) {
                continue;
            }
            path.push(next);
            dfs(edges, next, t, path, cost + c, best);
            path.pop();
        }
    }
    let mut best = None;
    dfs(edges, s, t, &mut vec![s], 0.0, &mut best);
    best
}

/// Piecewise-linear interpolation between `(position, colour)` anchors
/// with half-up rounding; `v` is clamped to `[lo, hi]`.
pub fn palette_color(v: f64, lo: f64, hi: f64, anchors: &[(f64, [u8; 3])]) -> [u8; 3] {
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    let mut i = 0;
    while i + 2 < anchors.len() && t > anchors[i + 1].0 {
        i += 1;
    }
    let (t0, c0) = anchors[i];
    let (t1, c1) = anchors[i + 1];
    let f = (t - t0) / (t1 - t0);
    let mut out = [0u8; 3];
    for k in 0..3 {
        let x = c0[k] as f64 * (1.0 - f) + c1[k] as f64 * f;
        out[k] = (x + 0.5).floor() as u8;
    }
    out
}

/// Adjusted Rand index from the contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(n as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

/// Standard normal sample by Box-Muller.
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// 300 unit-variance points around three centres pairwise 10σ apart, with
/// the generating centre of each.
pub fn three_blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = [(0.0, 0.0), (10.0, 0.0), (5.0, 75f64.sqrt())];
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for i in 0..300 {
        let c = i % 3;
        rows.push(vec![centres[c].0 + gaussian(&mut rng), centres[c].1 + gaussian(&mut rng)]);
        truth.push(c);
    }
    (rows, truth)
}
