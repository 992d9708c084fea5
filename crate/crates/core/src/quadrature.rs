//! Globally adaptive Gauss-Kronrod (10/21 point) quadrature on finite
//! intervals.
//!
//! The interval with the largest error estimate is bisected until the total
//! error estimate falls below `max(abs_tol, rel_tol * |I|)` or the interval
//! budget is exhausted. Error estimates use the QUADPACK rescaling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub intervals: usize,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// One 21-point Kronrod panel: `(value, error estimate)`.
pub fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]` (either orientation).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> QuadResult {
    if a == b {
        return QuadResult {
            value: 0.0,
            error: 0.0,
            converged: true,
            intervals: 0,
        };
    }
    let (v0, e0) = gk21(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value: v0,
        error: e0,
    });
    let mut total = v0;
    let mut err = e0;
    let mut count = 1;
    loop {
        if !total.is_finite() || !err.is_finite() {
            return QuadResult {
                value: total,
                error: f64::INFINITY,
                converged: false,
                intervals: count,
            };
        }
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
            break;
        }
        if count >= cfg.max_intervals {
            return QuadResult {
                value: total,
                error: err,
                converged: false,
                intervals: count,
            };
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid == worst.a || mid == worst.b {
            // cannot split further; accept what we have
            heap.push(worst);
            return QuadResult {
                value: total,
                error: err,
                converged: false,
                intervals: count,
            };
        }
        let (v1, e1) = gk21(&mut f, worst.a, mid);
        let (v2, e2) = gk21(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        count += 1;
    }
    // re-sum to shed the drift of incremental updates
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    QuadResult {
        value,
        error,
        converged: true,
        intervals: count,
    }
}

/// Integrand handle shared by cached antiderivatives.
pub type Integrand = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Antiderivative of an integrand anchored at a point, with values cached on
/// a node set. Evaluation integrates from the nearest cached node, so results
/// carry quadrature accuracy everywhere, not interpolation accuracy.
#[derive(Clone)]
pub struct Antiderivative {
    f: Integrand,
    nodes: Vec<f64>,
    values: Vec<f64>,
    cfg: QuadConfig,
}

impl std::fmt::Debug for Antiderivative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Antiderivative")
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

/// Tolerances for the short node-to-node integrals.
pub const ANTIDERIVATIVE_QUAD: QuadConfig = QuadConfig {
    abs_tol: 1e-14,
    rel_tol: 1e-13,
    max_intervals: 200,
};

impl Antiderivative {
    /// Integrates `f` from `anchor` across `nodes` (the anchor is added as a
    /// node). Values past a segment with a non-finite integral are NaN.
    pub fn build(f: Integrand, anchor: f64, mut nodes: Vec<f64>) -> Antiderivative {
        let cfg = ANTIDERIVATIVE_QUAD;
        nodes.push(anchor);
        nodes.retain(|v| v.is_finite());
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let ia = nodes.partition_point(|&v| v < anchor);
        let mut values = vec![f64::NAN; nodes.len()];
        values[ia] = 0.0;
        let seg = |a: f64, b: f64| {
            let r = integrate(|y| f(y), a, b, &cfg);
            if r.value.is_finite() {
                r.value
            } else {
                f64::NAN
            }
        };
        for i in ia + 1..nodes.len() {
            values[i] = values[i - 1] + seg(nodes[i - 1], nodes[i]);
        }
        for i in (0..ia).rev() {
            values[i] = values[i + 1] - seg(nodes[i], nodes[i + 1]);
        }
        Antiderivative {
            f,
            nodes,
            values,
            cfg,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_values(&self) -> &[f64] {
        &self.values
    }

    /// Subtracts `c` from every cached value (moves the anchor's level).
    pub fn shift(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v -= c);
    }

    pub fn integrand(&self, y: f64) -> f64 {
        (self.f)(y)
    }

    /// Value at `y`; NaN when the integral from the nearest node fails.
    pub fn eval(&self, y: f64) -> f64 {
        let idx = self.nodes.partition_point(|&v| v < y);
        let k = if idx == 0 {
            0
        } else if idx == self.nodes.len() || (y - self.nodes[idx - 1]) <= (self.nodes[idx] - y) {
            idx - 1
        } else {
            idx
        };
        let base = self.values[k];
        if self.nodes[k] == y {
            return base;
        }
        let f = &self.f;
        let r = integrate(|t| f(t), self.nodes[k], y, &self.cfg);
        base + r.value
    }
}

/// Node layout for an antiderivative on `[lo, hi]`: `n` uniform interior
/// nodes plus a geometric cluster toward each flagged end.
pub fn layout_nodes(lo: f64, hi: f64, n: usize, cluster_lo: bool, cluster_hi: bool) -> Vec<f64> {
    let w = (hi - lo) / n as f64;
    let mut v: Vec<f64> = (1..n).map(|i| lo + w * i as f64).collect();
    for j in 1..=60 {
        let d = w * 0.5f64.powi(j);
        if cluster_lo && lo + d > lo {
            v.push(lo + d);
        }
        if cluster_hi && hi - d < hi {
            v.push(hi - d);
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}
