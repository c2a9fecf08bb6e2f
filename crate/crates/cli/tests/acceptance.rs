//! End-to-end acceptance run (a plain binary, so its report is never
//! captured). Prints one PASS/FAIL line per criterion and a tally. Criterion
//! failures are reported without failing the target unless
//! `WDPD_ACCEPTANCE_STRICT=1` is set; pipeline errors always fail it.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wdpd_cli::commands::{cmd_generate, cmd_sweep_forward, cmd_train_dpd};
use wdpd_cli::ExperimentConfig;
use wdpd_core::metrics::{evm, flops, nmse, EvmMode};
use wdpd_core::nn::{backward_mlp, forward_batch, init_mlp, nmse_loss, MlpParams, MlpSpec, SearchSpace, TrainConfig};
use wdpd_core::signal::WaveformSpec;
use wdpd_core::walsh::{fast_forward, fast_inverse, forward, sequency_basis, Normalization};
use wdpd_core::Complex64;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(v: &Verdict) {
    println!(
        "criterion {} {} {}: {} [{:.1} s]",
        v.id,
        if v.pass { "PASS" } else { "FAIL" },
        v.name,
        v.detail,
        v.elapsed.as_secs_f64()
    );
}

fn random_block(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn transform_correctness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut fast_err, mut round_trip, mut parseval, mut sign_ok) = (0.0f64, 0.0f64, 0.0f64, true);
    let mut n = 2;
    while n <= 1024 {
        let basis = sequency_basis(n).unwrap();
        for i in 0..n {
            let row = basis.row(i);
            sign_ok &= row.windows(2).filter(|w| w[0] != w[1]).count() == i;
        }
        let x = random_block(&mut rng, n);
        let naive = forward(&x, &basis).unwrap();
        let fast = fast_forward(&x, Normalization::Orthonormal).unwrap();
        for (a, b) in naive.coeffs().iter().zip(fast.coeffs()) {
            fast_err = fast_err.max((a - b).norm());
        }
        let back = fast_inverse(&fast, Normalization::Orthonormal).unwrap();
        let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let diff: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).norm_sqr()).sum();
        round_trip = round_trip.max((diff / ex).sqrt());
        let ec: f64 = fast.coeffs().iter().map(|v| v.norm_sqr()).sum();
        parseval = parseval.max((ec - ex).abs() / ex);
        n *= 2;
    }
    let pass = fast_err <= 1e-12 && round_trip <= 1e-10 && parseval <= 1e-10 && sign_ok;
    (
        pass,
        format!("fast-naive {fast_err:.1e}, round trip {round_trip:.1e}, Parseval {parseval:.1e}, sign changes ok={sign_ok}"),
    )
}

fn gradient_integrity() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let inputs = rng.gen_range(2..7);
        let outputs = rng.gen_range(1..=inputs);
        let mut spec = MlpSpec::new(inputs, outputs, rng.gen_range(1..4), rng.gen_range(2..9));
        if case % 2 == 1 {
            spec = spec.with_residual(false);
        }
        let mut params = init_mlp(&spec, case).unwrap();
        for l in &mut params.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
        }
        let rows = rng.gen_range(1..9);
        let x = ndarray::Array2::from_shape_fn((rows, inputs), |_| rng.gen_range(-1.5..1.5));
        let y = ndarray::Array2::from_shape_fn((rows, outputs), |_| rng.gen_range(-1.0..1.0));
        let loss = |p: &MlpParams| nmse_loss(forward_batch(p, x.view()).unwrap().view(), y.view()).unwrap().0;
        let (_, grads) = backward_mlp(&params, x.view(), y.view()).unwrap();
        let h = 1e-6;
        for li in 0..params.layers.len() {
            for (idx, g) in grads.layers[li].weights.indexed_iter() {
                let (mut p, mut m) = (params.clone(), params.clone());
                p.layers[li].weights[idx] += h;
                m.layers[li].weights[idx] -= h;
                let num = (loss(&p) - loss(&m)) / (2.0 * h);
                worst = worst.max((g - num).abs() / g.abs().max(num.abs()).max(1e-4));
            }
            for (j, g) in grads.layers[li].bias.iter().enumerate() {
                let (mut p, mut m) = (params.clone(), params.clone());
                p.layers[li].bias[j] += h;
                m.layers[li].bias[j] -= h;
                let num = (loss(&p) - loss(&m)) / (2.0 * h);
                worst = worst.max((g - num).abs() / g.abs().max(num.abs()).max(1e-4));
            }
        }
    }
    (worst < 1e-5, format!("worst relative error {worst:.2e} over 20 specs"))
}

/// Sums in 128-bit fixed point after scaling by 2^60; exact for the ranges used.
fn exact_sum(values: impl Iterator<Item = f64>) -> f64 {
    let scale = (1u128 << 60) as f64;
    let total: i128 = values.map(|v| (v * scale).round() as i128).sum();
    total as f64 / scale
}

fn metric_oracles() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_nmse = 0.0f64;
    let mut worst_evm = 0.0f64;
    for len in [16usize, 1000, 20000] {
        let x = random_block(&mut rng, len);
        let y: Vec<Complex64> = x
            .iter()
            .map(|v| v + Complex64::new(rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01)))
            .collect();
        let err = exact_sum(x.iter().zip(&y).map(|(a, b)| (b - a).norm_sqr()));
        let reference = exact_sum(x.iter().map(|a| a.norm_sqr()));
        worst_nmse = worst_nmse.max((nmse(&x, &y).unwrap() - 10.0 * (err / reference).log10()).abs());
        let oracle_evm = 100.0 * (err / reference).sqrt();
        worst_evm = worst_evm.max((evm(&x, &y, EvmMode::Unit).unwrap() - oracle_evm).abs());
    }
    let example = flops(&MlpSpec::new(2, 2, 1, 10), 20e9);
    let pass = worst_nmse <= 1e-9 && worst_evm <= 1e-9 && example == 5.64e12;
    (
        pass,
        format!("nmse err {worst_nmse:.1e} dB, evm err {worst_evm:.1e} %, example flops {example:e}"),
    )
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn same_files(a: &Path, b: &Path) -> (bool, usize) {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut ok = true;
    for name in &names {
        ok &= std::fs::read(a.join(name)).ok() == std::fs::read(b.join(name)).ok();
    }
    (ok, names.len())
}

fn reduced_config(out: &Path) -> ExperimentConfig {
    let quick = TrainConfig { max_epochs: 40, patience: 10, batch_size: 128, ..Default::default() };
    let mut cfg = ExperimentConfig {
        waveform: WaveformSpec { n_samples: 1 << 14, n_carriers: 512, ..Default::default() },
        output_dir: out.to_path_buf(),
        ..Default::default()
    };
    cfg.sweep.budgets_tflops = vec![16.0, 64.0];
    cfg.sweep.walsh_train_offsets = 2;
    for plan in &mut cfg.sweep.families {
        plan.space = SearchSpace { hidden_layers: vec![1, 2], hidden_widths: vec![8, 16] };
        plan.train = quick.clone();
    }
    cfg.dpd.teacher_width = 16;
    cfg.dpd.teacher_train = quick.clone();
    cfg.dpd.student_width = 32;
    cfg.dpd.student_train = quick.clone();
    cfg.dpd.finetune_train = quick;
    cfg.dpd.kd_extra_stimuli = 1;
    cfg.dpd.train_offsets = 2;
    cfg
}

fn timed(id: usize, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (pass, detail) = f();
    let v = Verdict { id, name, pass, detail, elapsed: start.elapsed() };
    report(&v);
    v
}

fn main() {
    let mut verdicts = Vec::new();
    let limit = |v: &mut Verdict, secs: u64| {
        if v.elapsed > Duration::from_secs(secs) {
            v.pass = false;
            v.detail.push_str(&format!("; over the {secs} s limit"));
        }
    };

    let mut v = timed(1, "transform correctness", transform_correctness);
    limit(&mut v, 10);
    verdicts.push(v);
    let mut v = timed(2, "gradient integrity", gradient_integrity);
    limit(&mut v, 30);
    verdicts.push(v);
    let mut v = timed(3, "metric oracles", metric_oracles);
    limit(&mut v, 5);
    verdicts.push(v);

    let work = tempfile::tempdir().unwrap();
    let mut v = timed(4, "forward-model sweep", || {
        let cfg = ExperimentConfig { output_dir: work.path().join("sweep"), ..Default::default() };
        let path = cmd_sweep_forward(&cfg.resolved().unwrap(), 1).unwrap();
        let rows = csv_rows(&std::fs::read_to_string(path).unwrap());
        let top = |family: &str| {
            rows.iter()
                .rfind(|r| r[0] == family)
                .and_then(|r| r[9].parse::<f64>().ok())
                .unwrap_or(f64::NAN)
        };
        let (iq, walsh) = (top("IQ"), top("Walsh"));
        let gap = (iq - walsh).abs();
        (
            iq <= -30.0 && walsh <= -30.0 && gap <= 2.0,
            format!("top-tier test NMSE IQ {iq:.2} dB, Walsh {walsh:.2} dB, gap {gap:.2} dB (need both <= -30, gap <= 2)"),
        )
    });
    limit(&mut v, 15 * 60);
    verdicts.push(v);

    let cfg = ExperimentConfig::default().resolved().unwrap();
    let start = Instant::now();
    let kd = cmd_train_dpd(&ExperimentConfig { output_dir: work.path().join("kd"), ..cfg.clone() }, true, false).unwrap();
    let kd_time = start.elapsed();
    let start = Instant::now();
    let plain = cmd_train_dpd(&ExperimentConfig { output_dir: work.path().join("no-kd"), ..cfg }, false, false).unwrap();
    let plain_time = start.elapsed();

    let base = &kd.baseline;
    let student = &kd.student_chain;
    let aclr_gain = base.aclr_db.worst_db - student.aclr_db.worst_db;
    let evm_cut = 1.0 - student.evm_percent / base.evm_percent;
    let mut v = Verdict {
        id: 5,
        name: "KD predistortion vs no DPD",
        pass: aclr_gain >= 1.0 && evm_cut >= 0.4,
        detail: format!(
            "ACLR {:.2} -> {:.2} dB ({aclr_gain:+.2} dB, need >= 1), EVM {:.2}% -> {:.2}% ({:.1}% lower, need >= 40%)",
            base.aclr_db.worst_db,
            student.aclr_db.worst_db,
            base.evm_percent,
            student.evm_percent,
            100.0 * evm_cut
        ),
        elapsed: kd_time,
    };
    limit(&mut v, 20 * 60);
    report(&v);
    verdicts.push(v);

    let ablation = plain.student_chain.aclr_db.worst_db - student.aclr_db.worst_db;
    let mut v = Verdict {
        id: 6,
        name: "KD ablation",
        pass: ablation >= 1.0,
        detail: format!(
            "worst ACLR with KD {:.2} dB, without {:.2} dB ({ablation:+.2} dB, need >= 1)",
            student.aclr_db.worst_db, plain.student_chain.aclr_db.worst_db
        ),
        elapsed: kd_time + plain_time,
    };
    limit(&mut v, 20 * 60);
    report(&v);
    verdicts.push(v);

    let teacher = kd.teacher_chain.as_ref().expect("KD run has a teacher chain");
    let gap = (teacher.aclr_db.worst_db - student.aclr_db.worst_db).abs();
    let mut v = Verdict {
        id: 7,
        name: "teacher-student closeness",
        pass: gap <= 1.5,
        detail: format!(
            "ACLR teacher {:.2} dB, student {:.2} dB, gap {gap:.2} dB (need <= 1.5)",
            teacher.aclr_db.worst_db, student.aclr_db.worst_db
        ),
        elapsed: kd_time,
    };
    limit(&mut v, 20 * 60);
    report(&v);
    verdicts.push(v);

    verdicts.push(timed(8, "determinism", || {
        let dirs = [work.path().join("run-a"), work.path().join("run-b")];
        for d in &dirs {
            let cfg = reduced_config(d).resolved().unwrap();
            cmd_generate(&cfg, None).unwrap();
            cmd_sweep_forward(&cfg, 1).unwrap();
            cmd_train_dpd(&cfg, true, true).unwrap();
        }
        let (same, files) = same_files(&dirs[0], &dirs[1]);
        (same, format!("{files} artifacts compared byte for byte, identical={same}"))
    }));

    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
    if std::env::var("WDPD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        let failed: Vec<usize> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
        assert!(failed.is_empty(), "failed criteria: {failed:?}");
    }
}
