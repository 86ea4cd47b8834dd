//! Independent reference computations for tests.
//!
//! Everything here is written as direct loops over plain `f64` slices, with
//! no shared code with the crates under test.

/// Direct convolution, `x: [b,cin,h,w]`, `k: [cout,cin,kh,kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 4],
    bias: Option<&[f64]>,
    stride: usize,
    pad: (usize, usize),
) -> (Vec<f64>, [usize; 4]) {
    let [b, cin, h, w] = xs;
    let [cout, _, kh, kw] = ks;
    let ho = (h + 2 * pad.0 - kh) / stride + 1;
    let wo = (w + 2 * pad.1 - kw) / stride + 1;
    let mut out = vec![0.0; b * cout * ho * wo];
    for n in 0..b {
        for o in 0..cout {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = bias.map_or(0.0, |bb| bb[o]);
                    for c in 0..cin {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (y * stride + i) as isize - pad.0 as isize;
                                let ix = (xx * stride + j) as isize - pad.1 as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((n * cin + c) * h + iy as usize) * w + ix as usize];
                                let kv = k[((o * cin + c) * kh + i) * kw + j];
                                acc += xv * kv;
                            }
                        }
                    }
                    out[((n * cout + o) * ho + y) * wo + xx] = acc;
                }
            }
        }
    }
    (out, [b, cout, ho, wo])
}

/// Max pooling over explicit windows given per axis as `(start, end)`.
pub fn max_pool_windows(
    x: &[f64],
    xs: [usize; 4],
    rows: &[(usize, usize)],
    cols: &[(usize, usize)],
) -> Vec<f64> {
    let [b, c, h, w] = xs;
    let mut out = Vec::new();
    for n in 0..b * c {
        for &(r0, r1) in rows {
            for &(c0, c1) in cols {
                let mut m = f64::NEG_INFINITY;
                for r in r0..r1 {
                    for cc in c0..c1 {
                        m = m.max(x[n * h * w + r * w + cc]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

/// Ceil-mode windows of a `kernel`/`stride` pool, clipped to the extent.
/// Starts stay inside the extent; the first window reaching the end is last.
pub fn ceil_windows(extent: usize, kernel: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for s in (0..extent.max(1)).step_by(stride) {
        v.push((s, (s + kernel).min(extent)));
        if s + kernel >= extent {
            break;
        }
    }
    v
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = acc;
        }
    }
    c
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Projection weights stored `[in, out]`, biases `[out]`.
pub struct AttnWeights<'a> {
    pub wq: &'a [f64],
    pub bq: &'a [f64],
    pub wk: &'a [f64],
    pub bk: &'a [f64],
    pub wv: &'a [f64],
    pub bv: &'a [f64],
    pub wo: &'a [f64],
    pub bo: &'a [f64],
}

fn project(x: &[f64], t: usize, d: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = matmul(x, w, t, d, d);
    for r in 0..t {
        for c in 0..d {
            y[r * d + c] += b[c];
        }
    }
    y
}

/// Multi-head self-attention on one `[t,d]` sequence, by hand:
/// per head `softmax(Q Kᵀ / √dk) V`, heads concatenated, output projection.
/// Returns the output and the per-head attention matrices `[heads][t*t]`.
pub fn attention(x: &[f64], t: usize, d: usize, heads: usize, w: &AttnWeights) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dk = d / heads;
    let q = project(x, t, d, w.wq, w.bq);
    let k = project(x, t, d, w.wk, w.bk);
    let v = project(x, t, d, w.wv, w.bv);
    let mut ctx = vec![0.0; t * d];
    let mut maps = Vec::new();
    for h in 0..heads {
        let mut map = vec![0.0; t * t];
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| {
                    (0..dk).map(|c| q[i * d + h * dk + c] * k[j * d + h * dk + c]).sum::<f64>()
                        / (dk as f64).sqrt()
                })
                .collect();
            let p = softmax(&scores);
            for j in 0..t {
                map[i * t + j] = p[j];
                for c in 0..dk {
                    ctx[i * d + h * dk + c] += p[j] * v[j * d + h * dk + c];
                }
            }
        }
        maps.push(map);
    }
    (project(&ctx, t, d, w.wo, w.bo), maps)
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let eps = 1e-12;
    let mut s = 0.0;
    for i in 0..p.len() {
        s += p[i] * (p[i].max(eps).ln() - q[i].max(eps).ln());
    }
    s
}

pub fn cross_entropy(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s -= p[i] * q[i].max(1e-12).ln();
    }
    s
}

pub fn entropy(p: &[f64]) -> f64 {
    cross_entropy(p, p)
}

/// `P[i][j] = (1/B) Σ_b a[b][i]·c[b][j]`, accumulated one term at a time.
pub fn contingency(a: &[Vec<f64>], c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let bsz = a.len();
    let (da, dc) = (a[0].len(), c[0].len());
    let mut p = vec![vec![0.0; dc]; da];
    for i in 0..da {
        for j in 0..dc {
            for b in 0..bsz {
                p[i][j] += a[b][i] * c[b][j] / bsz as f64;
            }
        }
    }
    p
}

/// `Σ_ij P_ij ln(P_ij / (p_i q_j))`, skipping zero cells.
pub fn mutual_information(p: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..p[0].len()).map(|j| p.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in p.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            if v > 0.0 {
                mi += v * (v / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi
}

/// Plug-in MI of paired labels from a count histogram.
pub fn plugin_mi(x: &[usize], y: &[usize], kx: usize, ky: usize) -> f64 {
    let n = x.len() as f64;
    let mut joint = vec![vec![0usize; ky]; kx];
    let mut cx = vec![0usize; kx];
    let mut cy = vec![0usize; ky];
    for (&a, &b) in x.iter().zip(y) {
        joint[a][b] += 1;
        cx[a] += 1;
        cy[b] += 1;
    }
    let mut mi = 0.0;
    for a in 0..kx {
        for b in 0..ky {
            if joint[a][b] > 0 {
                let pab = joint[a][b] as f64 / n;
                mi += pab * (pab / ((cx[a] as f64 / n) * (cy[b] as f64 / n))).ln();
            }
        }
    }
    mi
}

/// `(OA, AA, kappa)` from a confusion matrix built by counting.
pub fn classification_scores(pred: &[usize], truth: &[usize], classes: usize) -> (f64, f64, f64) {
    let mut cm = vec![vec![0.0f64; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        cm[t][p] += 1.0;
    }
    let n = pred.len() as f64;
    let diag: f64 = (0..classes).map(|i| cm[i][i]).sum();
    let oa = diag / n;
    let mut recalls = Vec::new();
    for (i, row) in cm.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            recalls.push(row[i] / total);
        }
    }
    let aa = recalls.iter().sum::<f64>() / recalls.len() as f64;
    let mut pe = 0.0;
    for i in 0..classes {
        let row: f64 = cm[i].iter().sum();
        let col: f64 = (0..classes).map(|r| cm[r][i]).sum();
        pe += row * col;
    }
    pe /= n * n;
    let kappa = if (1.0 - pe).abs() < 1e-15 { 1.0 } else { (oa - pe) / (1.0 - pe) };
    (oa, aa, kappa)
}

/// Pearson correlation of two equal-length series via the covariance formula.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Reflect (edge-excluded) index into `[0, n)`.
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let mut i = i;
    let last = n as isize - 1;
    while i < 0 || i > last {
        if i < 0 {
            i = -i;
        }
        if i > last {
            i = 2 * last - i;
        }
    }
    i as usize
}

/// Nearest-centroid labels for feature rows given per-class centroids.
pub fn nearest_centroid(rows: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    rows.iter()
        .map(|r| {
            let mut best = (f64::INFINITY, 0);
            for (c, cen) in centroids.iter().enumerate() {
                let d: f64 = r.iter().zip(cen).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect()
}
