//! Reference Kalman predictor on plain nested vectors.
//!
//! Shares no code with the library: matrices are built element by element,
//! products are triple loops, and `S⁻¹` is an explicit Gauss–Jordan inverse.
#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            c[i][j] = s;
        }
    }
    c
}

pub fn mul_vec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    let mut t = zeros(a[0].len(), a.len());
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect()
}

pub fn scale(a: &Mat, c: f64) -> Mat {
    a.iter()
        .map(|r| r.iter().map(|x| x * c).collect())
        .collect()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Gauss–Jordan with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.clone();
    let mut inv = identity(n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        assert!(m[piv][col].abs() > 1e-300, "singular matrix");
        m.swap(col, piv);
        inv.swap(col, piv);
        let d = m[col][col];
        for j in 0..n {
            m[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        m[i][j] -= f * m[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    inv
}

pub struct Model {
    pub d: usize,
    pub a: Mat,
    pub h: Mat,
    pub q: Mat,
    pub r: Mat,
}

impl Model {
    /// Constant-acceleration model with white-acceleration process noise,
    /// state ordered `[positions; velocities; accelerations]`.
    pub fn constant_acceleration(d: usize, dt: f64, alpha: f64, q: f64, r: f64) -> Self {
        let n = 3 * d;
        let block = [
            [alpha, dt, dt * dt / 2.0],
            [0.0, alpha, dt],
            [0.0, 0.0, alpha],
        ];
        let g = [dt * dt / 2.0, dt, 1.0];
        let mut a = zeros(n, n);
        let mut qm = zeros(n, n);
        for i in 0..d {
            for bi in 0..3 {
                for bj in 0..3 {
                    a[bi * d + i][bj * d + i] = block[bi][bj];
                    qm[bi * d + i][bj * d + i] = q * g[bi] * g[bj];
                }
            }
        }
        let mut h = zeros(d, n);
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Model {
            d,
            a,
            h,
            q: qm,
            r: scale(&identity(d), r),
        }
    }

    pub fn n(&self) -> usize {
        3 * self.d
    }
}

pub struct Step {
    pub x: Vec<f64>,
    pub p: Mat,
    pub innovation: Vec<f64>,
    pub gain: Mat,
}

/// `K = A P Hᵀ (H P Hᵀ + R)⁻¹`.
pub fn gain(m: &Model, p: &Mat) -> Mat {
    let ht = transpose(&m.h);
    let s = add(&mul(&mul(&m.h, p), &ht), &m.r);
    mul(&mul(&mul(&m.a, p), &ht), &inverse(&s))
}

/// `A P Aᵀ − A P Hᵀ S⁻¹ H P Aᵀ + Q`.
pub fn riccati(m: &Model, p: &Mat) -> Mat {
    let at = transpose(&m.a);
    let ht = transpose(&m.h);
    let s = add(&mul(&mul(&m.h, p), &ht), &m.r);
    let aph = mul(&mul(&m.a, p), &ht);
    let correction = mul(&mul(&aph, &inverse(&s)), &transpose(&aph));
    add(&sub(&mul(&mul(&m.a, p), &at), &correction), &m.q)
}

pub fn predict(m: &Model, x: &[f64], p: &Mat, z: &[f64]) -> Step {
    let hx = mul_vec(&m.h, x);
    let innovation: Vec<f64> = z.iter().zip(&hx).map(|(a, b)| a - b).collect();
    let k = gain(m, p);
    let ax = mul_vec(&m.a, x);
    let kv = mul_vec(&k, &innovation);
    Step {
        x: ax.iter().zip(&kv).map(|(a, b)| a + b).collect(),
        p: riccati(m, p),
        innovation,
        gain: k,
    }
}

pub struct Row {
    pub predicted: Vec<f64>,
    pub innovation: Vec<f64>,
    pub gain_norm: f64,
    pub p_trace: f64,
}

/// Rows `1..K`: prediction held before consuming `obs[k]`, then the
/// innovation and gain that consumed it. Returns the final forecast too.
pub fn track(m: &Model, x0: &[f64], obs: &[Vec<f64>], p0: f64) -> (Vec<Row>, Vec<f64>) {
    let mut x = x0.to_vec();
    let mut p = scale(&identity(m.n()), p0);
    let first = predict(m, &x, &p, &obs[0]);
    x = first.x;
    p = first.p;
    let mut rows = Vec::new();
    for z in &obs[1..] {
        let predicted = x[..m.d].to_vec();
        let p_trace = (0..m.n()).map(|i| p[i][i]).sum();
        let s = predict(m, &x, &p, z);
        rows.push(Row {
            predicted,
            innovation: s.innovation,
            gain_norm: s.gain.iter().flatten().map(|v| v * v).sum::<f64>().sqrt(),
            p_trace,
        });
        x = s.x;
        p = s.p;
    }
    (rows, x[..m.d].to_vec())
}

/// Start state `(z0, 0, 0)`.
pub fn start_from(z0: &[f64]) -> Vec<f64> {
    let mut x = z0.to_vec();
    x.resize(3 * z0.len(), 0.0);
    x
}
