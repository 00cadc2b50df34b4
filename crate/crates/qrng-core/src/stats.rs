//! Small moment/correlation helpers shared by calibration, entropy
//! estimation and the test suites.

/// Streaming moment accumulator over power sums.
///
/// Designed for roughly centered data (AC-coupled records); power sums in
/// f64 keep relative errors near n*eps at these scales, far below the
/// statistical uncertainty of any estimate taken from them.
#[derive(Debug, Clone, Default)]
pub struct Moments {
    n: u64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.s1 += x;
        let x2 = x * x;
        self.s2 += x2;
        self.s3 += x2 * x;
        self.s4 += x2 * x2;
    }

    pub fn push_slice_f32(&mut self, xs: &[f32]) {
        // Batched in independent lanes so the loop vectorizes; merged in a
        // fixed order for run-to-run determinism.
        const LANES: usize = 8;
        let mut s1 = [0.0f64; LANES];
        let mut s2 = [0.0f64; LANES];
        let mut s3 = [0.0f64; LANES];
        let mut s4 = [0.0f64; LANES];
        let chunks = xs.len() / LANES;
        for c in 0..chunks {
            for l in 0..LANES {
                let x = xs[c * LANES + l] as f64;
                let x2 = x * x;
                s1[l] += x;
                s2[l] += x2;
                s3[l] += x2 * x;
                s4[l] += x2 * x2;
            }
        }
        for l in 0..LANES {
            self.s1 += s1[l];
            self.s2 += s2[l];
            self.s3 += s3[l];
            self.s4 += s4[l];
        }
        for &x in &xs[chunks * LANES..] {
            self.n += 1;
            self.s1 += x as f64;
            let x = x as f64;
            let x2 = x * x;
            self.s2 += x2;
            self.s3 += x2 * x;
            self.s4 += x2 * x2;
        }
        self.n += (chunks * LANES) as u64;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.s1 / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        ((self.s2 - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the sample variance of a Gaussian sample,
    /// `sigma^2 * sqrt(2 / (N - 1))`.
    pub fn variance_standard_error(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        self.variance() * (2.0 / (self.n - 1) as f64).sqrt()
    }

    /// Excess kurtosis (0 for a Gaussian).
    pub fn excess_kurtosis(&self) -> f64 {
        if self.n < 4 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        let m2 = self.s2 / n - m * m;
        if m2 <= 0.0 {
            return 0.0;
        }
        let m4 =
            self.s4 / n - 4.0 * m * self.s3 / n + 6.0 * m * m * self.s2 / n - 3.0 * m * m * m * m;
        m4 / (m2 * m2) - 3.0
    }
}

pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let mut m = Moments::new();
    for &x in xs {
        m.push(x);
    }
    (m.mean(), m.variance())
}

/// Normalized autocorrelation at the given lags.
pub fn autocorrelation_f32(xs: &[f32], lags: &[usize]) -> Vec<f64> {
    let n = xs.len();
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    lags.iter()
        .map(|&lag| {
            if lag >= n || var == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for i in 0..n - lag {
                acc += (xs[i] as f64 - mean) * (xs[i + lag] as f64 - mean);
            }
            acc / ((n - lag) as f64 * var)
        })
        .collect()
}

/// Spearman rank correlation of two equal-length slices.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = rank as f64;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}
