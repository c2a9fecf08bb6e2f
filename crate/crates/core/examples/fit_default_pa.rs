//! Offline fit of the default PA coefficients.
//!
//! Reference response: Rapp soft limiter (p = 1, saturation 0.9) with
//! AM-PM of 1.0·r²/(1+r²) rad, followed by a short FIR. The odd-order
//! static polynomial is fitted by least squares over input amplitudes
//! [0, 1.6]; the memory polynomial is its outer product with the FIR
//! (a Hammerstein structure), scaled to exactly 15 dB small-signal gain.
//! Prints the constant tables pasted into `pa_model.rs`.

use wdpd_core::pa_model::{gain_db, small_signal_gain, MemoryPolynomialPa};
use wdpd_core::Complex64;

const K_MAX: usize = 7;
const MEMORY: usize = 3;
const FIR: [f64; MEMORY + 1] = [1.0, 0.08, -0.04, 0.015];
const GAIN_DB: f64 = 15.0;
const FIT_RANGE: f64 = 2.0;

fn reference(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        return z;
    }
    let a_sat = 0.9;
    let amp = r / (1.0 + (r / a_sat).powi(2)).sqrt();
    let phase = 1.0 * r * r / (1.0 + r * r);
    Complex64::from_polar(amp, z.arg() + phase)
}

fn solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (offset, r) in lower.iter_mut().enumerate() {
            let f = r[col] / pivot_row[col];
            for (x, &p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            let pivot_b = b[col];
            b[col + 1 + offset] -= f * pivot_b;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let s: Complex64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn main() {
    let n_orders = K_MAX.div_ceil(2);
    // Static nonlinearity: odd polynomial fitted on a uniform amplitude grid.
    let mut gram = vec![vec![Complex64::new(0.0, 0.0); n_orders]; n_orders];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n_orders];
    let points = 2000;
    for i in 1..=points {
        let r = FIT_RANGE * i as f64 / points as f64;
        let row: Vec<f64> = (0..n_orders).map(|k| r.powi(2 * k as i32 + 1)).collect();
        let target = reference(Complex64::new(r, 0.0));
        for a in 0..n_orders {
            for b in 0..n_orders {
                gram[a][b] += Complex64::new(row[a] * row[b], 0.0);
            }
            rhs[a] += target * row[a];
        }
    }
    let static_coeffs = solve(gram, rhs);
    // The FIR follows the static nonlinearity, so a[k,m] = c[k] * h[m].
    let mut coeffs: Vec<Complex64> = static_coeffs
        .iter()
        .flat_map(|&c| FIR.iter().map(move |&h| c * h))
        .collect();
    let pa = MemoryPolynomialPa::new(K_MAX, MEMORY, coeffs.clone()).unwrap();
    let scale = 10f64.powf(GAIN_DB / 20.0) / small_signal_gain(&pa).norm();
    coeffs.iter_mut().for_each(|c| *c *= scale);
    let pa = MemoryPolynomialPa::new(K_MAX, MEMORY, coeffs.clone()).unwrap();
    eprintln!("small-signal gain {:.6} dB", gain_db(small_signal_gain(&pa)));
    for r in [0.01, 0.5, 1.0, 1.6, 2.0, 2.5] {
        let y = pa.amplify_samples(&[Complex64::new(r, 0.0); 8]).unwrap()[7];
        eprintln!("r {r:4.2}: |y|/G {:.4} phase {:6.2} deg", y.norm() / 10f64.powf(0.75), y.arg().to_degrees());
    }

    let n_unknowns = coeffs.len();
    println!("const DEFAULT_RE: [f64; {n_unknowns}] = [");
    coeffs.iter().for_each(|c| println!("    {:?},", c.re));
    println!("];");
    println!("const DEFAULT_IM: [f64; {n_unknowns}] = [");
    coeffs.iter().for_each(|c| println!("    {:?},", c.im));
    println!("];");
}
