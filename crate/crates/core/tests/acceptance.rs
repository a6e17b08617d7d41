//! Acceptance suite C1–C9. Runs as a plain binary so the criteria execute in
//! order against one shared workbench, printing one PASS/FAIL line each.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use perturb_bench::attack::{adversarial_loss, clip_to_ball, mifgsm_attack};
use perturb_bench::audio::{synth_corpus, Waveform, SAMPLE_RATE};
use perturb_bench::defenses::{median_smooth, quantize_defense};
use perturb_bench::encoder::{cosine_score, cosine_with_grad, embed, input_gradient, DifferentiableEmbedder, EncoderConfig, EncoderModel, SpeakerEmbedding};
use perturb_bench::harness::{
    report_csv, run_scenario, AttackKind, BenchConfig, Condition, Removal, Scenario, ScenarioReport, ScenarioSpec,
    Workbench,
};
use perturb_bench::metrics::{compute_eer, mse_samples, si_snr_samples};
use perturb_bench::nn::{Module, Tensor3};
use perturb_bench::seed::mix_seed;
use perturb_bench::ssed::{SsedConfig, SsedNet};
use perturb_bench::training::{
    generator_loss, joint_loss, mask_loss, noise_loss, perceptual_loss, removal_loss, speaker_loss,
};

use common::brute_force_eer;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, format!("{name}: got {got}, want {want}"))
}

fn err(e: perturb_bench::Error) -> String {
    e.to_string()
}

fn emb(v: &[f64]) -> SpeakerEmbedding {
    SpeakerEmbedding::new(v.to_vec()).unwrap()
}

fn wave(v: &[f64]) -> Waveform {
    Waveform::new(v.to_vec(), SAMPLE_RATE).unwrap()
}

fn c1_formulas() -> Outcome {
    let tol = 1e-9;
    let v = [0.6, -0.8, 0.0];
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    let orth = [0.8, 0.6, 0.0];
    let triple: Vec<f64> = v.iter().map(|x| 3.0 * x).collect();
    let l = |r: perturb_bench::Result<f64>| r.unwrap();

    close("cos a=b", l(cosine_score(&emb(&v), &emb(&v))), 1.0, tol)?;
    close("cos orthogonal", l(cosine_score(&emb(&v), &emb(&orth))), 0.0, tol)?;
    close("cos a,3a", l(cosine_score(&emb(&v), &emb(&triple))), 1.0, tol)?;

    close("L_s v'=v", l(speaker_loss(&emb(&v), &emb(&v))), 1.0, tol)?;
    close("L_s v'⟂v", l(speaker_loss(&emb(&v), &emb(&orth))), 0.0, tol)?;
    close("L_s v'=-v", l(speaker_loss(&emb(&v), &emb(&neg))), -1.0, tol)?;
    close("adv ỹ=y", l(adversarial_loss(&emb(&v), &emb(&v))), -1.0, tol)?;
    close("adv ỹ⟂y", l(adversarial_loss(&emb(&v), &emb(&orth))), 0.0, tol)?;
    close("adv ỹ=-y", l(adversarial_loss(&emb(&v), &emb(&neg))), 1.0, tol)?;

    close("L_p x'=x m=0", l(perceptual_loss(&[0.1, 0.2], &[0.1, 0.2], &[0.0, 0.0], 0.99)), 0.0, tol)?;
    close("L_p γ=1", l(perceptual_loss(&[0.0, 0.0], &[0.3, 0.4], &[1.0, 1.0], 1.0)), 0.5, tol)?;
    close("L_p γ=0.5", l(perceptual_loss(&[0.0, 0.0], &[0.3, 0.4], &[1.0, 0.0], 0.5)), 0.75, tol)?;
    close("L_G η=1", generator_loss(0.8, 2.0, 1.0), 0.8, tol)?;
    close("L_G η=0", generator_loss(0.8, 2.0, 0.0), 2.0, tol)?;
    close("L_G η=0.993", generator_loss(0.8, 2.0, 0.993), 0.8084, tol)?;
    close("L_noise n'=-n", l(noise_loss(&[0.3, -0.2], &[-0.3, 0.2])), 0.0, tol)?;
    close("L_noise zeros", l(noise_loss(&[0.0, 0.0], &[0.0, 0.0])), 0.0, tol)?;
    close("L_noise √2", l(noise_loss(&[1.0, 0.0], &[0.0, 1.0])), 2f64.sqrt(), tol)?;
    close("L_mask m'=m", l(mask_loss(&[0.3, 0.7], &[0.3, 0.7])), 0.0, tol)?;
    close("L_mask 1", l(mask_loss(&[1.0, 0.0], &[0.0, 0.0])), 1.0, tol)?;
    close("L_mask √0.5", l(mask_loss(&[0.5, 0.5], &[0.0, 1.0])), 0.5f64.sqrt(), tol)?;
    close("L_R ω=0", removal_loss(1.0, 2.0, 0.0), 2.0, tol)?;
    close("L_R ω=1", removal_loss(1.0, 2.0, 1.0), 1.0, tol)?;
    close("L_R ω=0.2", removal_loss(1.0, 2.0, 0.2), 1.8, tol)?;
    close("L β=1", joint_loss(1.0, 2.0, 1.0), 1.0, tol)?;
    close("L β=0", joint_loss(1.0, 2.0, 0.0), 2.0, tol)?;
    close("L β=0.94", joint_loss(1.0, 2.0, 0.94), 1.06, tol)?;

    let clip = |c: f64, o: f64, e: f64| clip_to_ball(&wave(&[c]), &wave(&[o]), e).unwrap().samples()[0];
    close("clip unchanged", clip(0.2, 0.2, 0.1), 0.2, tol)?;
    close("clip ε-ball", clip(0.3, 0.0, 0.1), 0.1, tol)?;
    close("clip range", clip(1.0, 0.95, 0.1), 1.0, tol)?;

    let qt = |code: f64| quantize_defense(&wave(&[code / 32768.0]), 256).unwrap().samples()[0] * 32768.0;
    close("QT 300", qt(300.0), 256.0, tol)?;
    close("QT 384 tie", qt(384.0), 512.0, tol)?;
    close("QT 0", qt(0.0), 0.0, tol)?;
    let ms = |v: &[f64]| median_smooth(&wave(v), 3).unwrap().samples().to_vec();
    ensure(ms(&[0.3; 6]) == vec![0.3; 6], "MS constant")?;
    let scale = 0.1;
    let hand: Vec<f64> = [1.0, 5.0, 1.0, 5.0, 1.0].iter().map(|x| x * scale).collect();
    let want: Vec<f64> = [1.0, 1.0, 5.0, 1.0, 1.0].iter().map(|x| x * scale).collect();
    ensure(ms(&hand) == want, "MS hand median")?;
    ensure(ms(&[0.0, 0.0, 0.9, 0.0, 0.0]) == vec![0.0; 5], "MS impulse")?;

    let r = [0.1, -0.3, 0.5, 0.2];
    let twice: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
    close("SI-SNR identical", l(si_snr_samples(&r, &r)), 100.0, tol)?;
    close("SI-SNR 2x", l(si_snr_samples(&twice, &r)), 100.0, tol)?;
    close("MSE identical", l(mse_samples(&r, &r)), 0.0, tol)?;
    let off: Vec<f64> = r.iter().map(|x| x + 0.001).collect();
    close("MSE offset", l(mse_samples(&off, &r)), 1.0, tol)?;
    close("EER separated", l(compute_eer(&[0.9, 0.8], &[0.2, 0.1])), 0.0, tol)?;
    close("EER inverted", l(compute_eer(&[0.2, 0.1], &[0.9, 0.8])), 1.0, tol)?;
    Ok("49 hand cases exact to 1e-9".into())
}

fn rel_ok(fd: f64, an: f64, abs_floor: f64) -> bool {
    let denom = fd.abs().max(an.abs());
    (fd - an).abs() <= abs_floor || (fd - an).abs() / denom < 1e-3
}

fn c2_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    let mut track = |fd: f64, an: f64, floor: f64, what: String| -> Result<(), String> {
        let denom = fd.abs().max(an.abs()).max(1e-300);
        if (fd - an).abs() > floor {
            worst = worst.max((fd - an).abs() / denom);
        }
        ensure(rel_ok(fd, an, floor), format!("{what}: fd {fd} vs analytic {an}"))
    };

    // Encoder: input gradient of a cosine loss through the whole front end.
    let cfg = EncoderConfig {
        channels: 16,
        embed_dim: 8,
        ..EncoderConfig::default()
    };
    let model = EncoderModel::init(cfg, 3).map_err(err)?;
    let x = synth_corpus(1, 1, 0.3, 4).map_err(err)?.utterances()[0].samples().to_vec();
    let target: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
    let loss = |s: &[f64]| -cosine_with_grad(&target, &model.embed_samples(s).unwrap()).unwrap().0;
    let (_, g) = input_gradient(&model, &x, |e| {
        let (c, d) = cosine_with_grad(&target, e.values())?;
        Ok((-c, d.iter().map(|v| -v).collect()))
    })
    .map_err(err)?;
    for _ in 0..10 {
        let i = rng.gen_range(0..x.len());
        let h = 1e-5;
        let (mut p, mut m) = (x.clone(), x.clone());
        p[i] += h;
        m[i] -= h;
        let fd = (loss(&p) - loss(&m)) / (2.0 * h);
        track(fd, g[i], 1e-9, format!("encoder input {i}"))?;
    }

    // SSED: input and parameter gradients of a weighted sum of all outputs.
    let scfg = SsedConfig {
        widths: [3, 4, 5],
        res_blocks: 2,
        epsilon: 0.05,
        seed: 1,
    };
    let net = SsedNet::new(scfg.clone()).map_err(err)?;
    let signal = |n: usize, seed: u64| -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| r.gen_range(-0.5..0.5)).collect()
    };
    let x = Tensor3::from_vec(2, 1, 62, signal(124, 5));
    let w: Vec<Tensor3> = (6..9).map(|s| Tensor3::from_vec(2, 1, 62, signal(124, s))).collect();
    let dot = |a: &Tensor3, b: &Tensor3| a.data.iter().zip(&b.data).map(|(p, q)| p * q).sum::<f64>();
    let ssed_loss = |n: &SsedNet, x: &Tensor3, train: bool| {
        let (o, _) = n.forward(x, train).unwrap();
        dot(&o.noise, &w[0]) + dot(&o.mask, &w[1]) + dot(&o.output, &w[2])
    };
    for train in [true, false] {
        let (_, cache) = net.forward(&x, train).map_err(err)?;
        let mut grad = SsedNet::zeroed(scfg.clone()).map_err(err)?;
        let dx = net
            .backward(&cache, Some(&w[0]), Some(&w[1]), Some(&w[2]), Some(&mut grad), true)
            .ok_or("no input gradient")?;
        let h = 1e-6;
        for _ in 0..10 {
            let i = rng.gen_range(0..x.data.len());
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data[i] += h;
            m.data[i] -= h;
            let fd = (ssed_loss(&net, &p, train) - ssed_loss(&net, &m, train)) / (2.0 * h);
            track(fd, dx.data[i], 1e-8, format!("ssed input {i} train={train}"))?;
        }
        let n_arrays = net.params().len();
        for _ in 0..10 {
            let a = rng.gen_range(0..n_arrays);
            let j = rng.gen_range(0..net.params()[a].len());
            let (mut np, mut nm) = (net.clone(), net.clone());
            np.params_mut()[a][j] += h;
            nm.params_mut()[a][j] -= h;
            let fd = (ssed_loss(&np, &x, train) - ssed_loss(&nm, &x, train)) / (2.0 * h);
            track(fd, grad.params()[a][j], 1e-8, format!("ssed param {a}/{j} train={train}"))?;
        }
    }
    Ok(format!("50 coordinates, worst relative error {worst:.1e}"))
}

fn c3_eer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let nt = rng.gen_range(1..=15);
        let nn = rng.gen_range(1..=15);
        // Every other instance is drawn on a coarse grid to force ties.
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    if k % 2 == 0 {
                        (v * 4.0).round() / 4.0
                    } else {
                        v
                    }
                })
                .collect()
        };
        let (t, n) = (draw(nt), draw(nn));
        let got = compute_eer(&t, &n).map_err(err)?;
        let want = brute_force_eer(&t, &n);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, format!("instance {k}: {got} vs oracle {want}"))?;
    }
    Ok(format!("200 instances, max deviation {worst:.1e}"))
}

fn c4_attack(bench: &Workbench) -> Outcome {
    let white = bench.white().map_err(err)?;
    let cfg = &bench.config.attack.mifgsm;
    ensure(
        cfg.epsilon == 0.05 && cfg.alpha == 0.005 && cfg.momentum_decay == 1.0 && cfg.iterations == 10,
        "attack config differs from ε=0.05, α=0.005, η=1.0, I=10",
    )?;
    let utts = &bench.test.utterances()[..50];
    let mut before = 0.0;
    let mut after = 0.0;
    let mut linf: f64 = 0.0;
    for (i, w) in utts.iter().enumerate() {
        let mut c = cfg.clone();
        c.seed = mix_seed(cfg.seed, i as u64);
        let res = mifgsm_attack(white, w, &c).map_err(err)?;
        let y = embed(white, w).map_err(err)?;
        before += cosine_score(&y, &y).map_err(err)?;
        after += cosine_score(&y, &embed(white, &res.adversarial).map_err(err)?).map_err(err)?;
        linf = linf.max(w.max_abs_diff(&res.adversarial).map_err(err)?);
    }
    let (before, after) = (before / 50.0, after / 50.0);
    ensure(linf <= cfg.epsilon, format!("‖δ‖∞ = {linf} exceeds ε"))?;
    ensure(
        after < 0.5 * before,
        format!("mean cosine {after:.3} not below half of {before:.3}"),
    )?;
    Ok(format!("max ‖δ‖∞ {linf:.4}, mean cosine {before:.3} → {after:.3}"))
}

fn run(bench: &Workbench, scenario: Scenario, attack: AttackKind, removal: Removal) -> Result<ScenarioReport, String> {
    let spec = ScenarioSpec::new(scenario, attack, removal).map_err(err)?;
    run_scenario(&spec, bench, None).map_err(err)
}

/// Also returns the first report it produced, for the determinism re-run.
fn c5_ignorant(bench: &Workbench) -> (Outcome, Option<ScenarioReport>) {
    let mut parts = Vec::new();
    let mut failed = Vec::new();
    let mut first = None;
    for removal in [Removal::Qt, Removal::Ms, Removal::An] {
        let rep = match run(bench, Scenario::Ignorant, AttackKind::Mifgsm, removal) {
            Ok(r) => r,
            Err(e) => return (Err(e), first),
        };
        let (o, a, p) = (rep.row(Condition::Ori), rep.row(Condition::Adv), rep.row(Condition::Processed));
        let line = format!(
            "{}: EER {:.1} < {:.1} < {:.1}, SI-SNR {:.2} < {:.2}",
            removal, o.eer_white, p.eer_white, a.eer_white, p.si_snr, a.si_snr
        );
        if !(o.eer_white < p.eer_white && p.eer_white < a.eer_white && p.si_snr < a.si_snr) {
            failed.push(removal.to_string());
        }
        parts.push(line);
        first.get_or_insert(rep);
    }
    let detail = parts.join("; ");
    let outcome = if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail} (violated by {})", failed.join(", ")))
    };
    (outcome, first)
}

fn c6_noise_denoiser(bench: &Workbench) -> Outcome {
    let rep = run(bench, Scenario::Ignorant, AttackKind::Mifgsm, Removal::NoiseDenoiser)?;
    let (a, p) = (rep.row(Condition::Adv), rep.row(Condition::Processed));
    let d_si = p.si_snr - a.si_snr;
    let d_eer = (p.eer_white - a.eer_white).abs() / a.eer_white;
    let line = format!(
        "SI-SNR {:.2} → {:.2} (Δ {d_si:+.2} dB), EER {:.1} → {:.1} ({:.0}% relative)",
        a.si_snr,
        p.si_snr,
        a.eer_white,
        p.eer_white,
        d_eer * 100.0
    );
    ensure(d_si.abs() < 2.0 && d_eer < 0.2, line.clone())?;
    Ok(line)
}

fn c7_ladder(bench: &Workbench) -> Outcome {
    let restored = |scenario, removal| -> Result<f64, String> {
        Ok(run(bench, scenario, AttackKind::Ssed, removal)?.row(Condition::Processed).si_snr)
    };
    let ind = restored(Scenario::WellInformed, Removal::Independent)?;
    let dg = restored(Scenario::SemiInformed, Removal::DenoisingG)?;
    let joint = restored(Scenario::WellInformed, Removal::Joint)?;
    let line = format!("independent {ind:.2} < denoising-g {dg:.2} < joint {joint:.2} dB");
    ensure(dg - ind >= 2.0 && joint - dg >= 2.0, line.clone())?;
    Ok(line)
}

fn c8_well_informed(bench: &Workbench) -> Outcome {
    let rep = run(bench, Scenario::WellInformed, AttackKind::Ssed, Removal::Joint)?;
    let (o, a, p) = (rep.row(Condition::Ori), rep.row(Condition::Adv), rep.row(Condition::Processed));
    let pitch = p.pitch_mean.unwrap_or(f64::NAN);
    let line = format!(
        "SI-SNR {:.2} → {:.2} dB, EER ori {:.1} / adv {:.1} / restored {:.1}, pitch mean {pitch:.3}",
        a.si_snr, p.si_snr, o.eer_white, a.eer_white, p.eer_white
    );
    ensure(
        p.si_snr - a.si_snr >= 10.0 && (p.eer_white - o.eer_white).abs() <= 2.0 && pitch >= 0.98,
        line.clone(),
    )?;
    Ok(line)
}

fn c9_determinism(config: &BenchConfig, first: &ScenarioReport) -> Outcome {
    let fresh = Workbench::new(config.clone(), None).map_err(err)?;
    let again = run(&fresh, first.metadata.spec.scenario, first.metadata.spec.attack, first.metadata.spec.removal)?;
    ensure(
        again.without_timestamp() == first.without_timestamp(),
        "re-run report differs",
    )?;
    ensure(
        report_csv(&again.rows).map_err(err)? == report_csv(&first.rows).map_err(err)?,
        "re-run CSV differs",
    )?;
    Ok(format!("{} reproduced bit-exactly on a fresh workbench", first.metadata.label))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: &str, title: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} PASS {title} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("{id} FAIL {title} ({secs:.1} s): {detail}");
            }
        }
    };

    let t = Instant::now();
    report("C1", "formula exactness", t, c1_formulas());
    let t = Instant::now();
    report("C2", "gradient suite", t, c2_gradients());
    let t = Instant::now();
    report("C3", "EER oracle equivalence", t, c3_eer_oracle());

    // The acceptance run always trains from scratch; a checkpoint cache
    // would make the runtime and determinism checks meaningless.
    let config = BenchConfig::default();
    let bench = Workbench::new(config.clone(), None).expect("desk workbench");

    let t = Instant::now();
    report("C4", "attack validity", t, c4_attack(&bench));
    let t = Instant::now();
    let (c5, first) = c5_ignorant(&bench);
    report("C5", "ignorant-scenario ordering", t, c5);
    let t = Instant::now();
    report("C6", "ignorant denoiser fails", t, c6_noise_denoiser(&bench));
    let t = Instant::now();
    report("C7", "awareness ladder", t, c7_ladder(&bench));
    let t = Instant::now();
    report("C8", "well-informed restoration", t, c8_well_informed(&bench));
    let t = Instant::now();
    let c9 = match &first {
        Some(r) => c9_determinism(&config, r),
        None => Err("no report from C5 to re-run".into()),
    };
    report("C9", "determinism", t, c9);

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
