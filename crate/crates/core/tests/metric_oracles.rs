//! Metrics checked against independent recomputation in double-double
//! arithmetic (about 106 significant bits).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wdpd_core::metrics::{evm, flops, nmse, ops_per_symbol, EvmMode};
use wdpd_core::nn::MlpSpec;

#[derive(Clone, Copy, Debug, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd { hi: p, lo: a.mul_add(b, -p) }
}

impl Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let lo = s.lo + self.lo + o.lo;
        two_sum(s.hi, lo)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.hi, o.hi);
        let lo = p.lo + self.hi * o.lo + self.lo * o.hi;
        two_sum(p.hi, lo)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd::from(q1)).neg());
        let q2 = r.hi / o.hi;
        two_sum(q1, q2)
    }

    fn sqr(self) -> Dd {
        self.mul(self)
    }
}

/// Exact difference of two doubles as a double-double.
fn diff(a: f64, b: f64) -> Dd {
    two_sum(a, -b)
}

fn log10_dd(v: Dd) -> f64 {
    // ln(hi + lo) = ln(hi) + lo/hi to first order.
    (v.hi.ln() + v.lo / v.hi) / std::f64::consts::LN_10
}

fn oracle_nmse_db(y: &[Complex64], p: &[Complex64]) -> f64 {
    let mut err = Dd::default();
    let mut reference = Dd::default();
    for (a, b) in y.iter().zip(p) {
        err = err.add(diff(b.re, a.re).sqr()).add(diff(b.im, a.im).sqr());
        reference = reference.add(two_prod(a.re, a.re)).add(two_prod(a.im, a.im));
    }
    10.0 * log10_dd(err.div(reference))
}

fn oracle_evm_unit(x: &[Complex64], y: &[Complex64]) -> f64 {
    let mut err = Dd::default();
    let mut reference = Dd::default();
    for (a, b) in x.iter().zip(y) {
        err = err.add(diff(b.re, a.re).sqr()).add(diff(b.im, a.im).sqr());
        reference = reference.add(two_prod(a.re, a.re)).add(two_prod(a.im, a.im));
    }
    100.0 * err.div(reference).hi.sqrt()
}

fn oracle_evm_ls(x: &[Complex64], y: &[Complex64]) -> f64 {
    // g = Σ conj(x) y / Σ|x|², then EVM of y/g against x.
    let (mut gr, mut gi, mut px) = (Dd::default(), Dd::default(), Dd::default());
    for (a, b) in x.iter().zip(y) {
        gr = gr.add(two_prod(a.re, b.re)).add(two_prod(a.im, b.im));
        gi = gi.add(two_prod(a.re, b.im)).add(two_prod(a.im, b.re).neg());
        px = px.add(two_prod(a.re, a.re)).add(two_prod(a.im, a.im));
    }
    let (gr, gi) = (gr.div(px), gi.div(px));
    let g2 = gr.sqr().add(gi.sqr());
    let mut err = Dd::default();
    for (a, b) in x.iter().zip(y) {
        // y / g = y · conj(g) / |g|²
        let re = Dd::from(b.re).mul(gr).add(Dd::from(b.im).mul(gi)).div(g2);
        let im = Dd::from(b.im).mul(gr).add(Dd::from(b.re).mul(gi).neg()).div(g2);
        err = err
            .add(re.add(Dd::from(a.re).neg()).sqr())
            .add(im.add(Dd::from(a.im).neg()).sqr());
    }
    100.0 * err.div(px).hi.sqrt()
}

fn random_pair(rng: &mut ChaCha8Rng, len: usize, noise: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let g = Complex64::new(rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0));
    let x: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let y = x
        .iter()
        .map(|s| s * g + Complex64::new(rng.gen_range(-noise..noise), rng.gen_range(-noise..noise)))
        .collect();
    (x, y)
}

#[test]
fn nmse_matches_double_double_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for len in [1, 7, 1000, 65536] {
        for noise in [1e-9, 1e-3, 0.5] {
            let (y, _) = random_pair(&mut rng, len, 1e-12);
            let p: Vec<Complex64> = y
                .iter()
                .map(|s| s + Complex64::new(rng.gen_range(-noise..noise), rng.gen_range(-noise..noise)))
                .collect();
            let got = nmse(&y, &p).unwrap();
            let want = oracle_nmse_db(&y, &p);
            assert!((got - want).abs() < 1e-9, "len {len} noise {noise}: {got} vs {want}");
        }
    }
}

#[test]
fn evm_matches_double_double_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for len in [3, 500, 65536] {
        for noise in [1e-6, 1e-2, 0.3] {
            let (x, y) = random_pair(&mut rng, len, noise);
            let got = evm(&x, &y, EvmMode::LsComplexGain).unwrap();
            let want = oracle_evm_ls(&x, &y);
            assert!((got - want).abs() < 1e-9, "ls len {len}: {got} vs {want}");
            let got = evm(&x, &y, EvmMode::Unit).unwrap();
            let want = oracle_evm_unit(&x, &y);
            assert!((got - want).abs() < 1e-9, "unit len {len}: {got} vs {want}");
        }
    }
}

#[test]
fn flops_reference_example() {
    let spec = MlpSpec::new(2, 2, 1, 10).with_residual(false);
    assert_eq!(ops_per_symbol(1, 10, 2, 2), 282);
    assert_eq!(flops(&spec, 20e9), 5.64e12);
}

#[test]
fn flops_matches_term_by_term_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (i, o) = (rng.gen_range(1..300usize), rng.gen_range(1..300usize));
        let (k, n) = (rng.gen_range(1..6usize), rng.gen_range(1..600usize));
        let (i, o, k, n) = (i as u128, o as u128, k as u128, n as u128);
        let expanded = 2 * n * i + 2 * k * n * n + 2 * n * o + o;
        assert_eq!(ops_per_symbol(k as usize, n as usize, i as usize, o as usize), expanded);
        let spec = MlpSpec::new(i as usize, o as usize, k as usize, n as usize).with_residual(false);
        let f_symb = 20e9 / 64.0;
        assert_eq!(flops(&spec, f_symb), expanded as f64 * f_symb);
    }
}
