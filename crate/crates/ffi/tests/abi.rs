use std::ffi::{CStr, CString};
use std::ptr;

use perturb_bench::audio::synth_corpus;
use perturb_bench::checkpoint::{save_encoder, save_ssed};
use perturb_bench::encoder::{train_encoder, EncoderConfig};
use perturb_bench::metrics::{compute_eer, si_snr_samples};
use perturb_bench::ssed::{SsedConfig, SsedNet};
use perturb_bench_ffi::*;

fn last_error() -> String {
    let p = pb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tone(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.3 * (i as f64 * 0.05).sin()).collect()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(pb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn metrics_match_core() {
    let x = tone(800);
    let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 0.01 * ((i % 7) as f64 - 3.0) / 3.0).collect();
    let mut out = 0.0;
    let s = unsafe { pb_si_snr(y.as_ptr(), x.as_ptr(), x.len(), &mut out) };
    assert_eq!(s, PbStatus::Ok);
    assert_eq!(out, si_snr_samples(&y, &x).unwrap());

    let s = unsafe { pb_mse(x.as_ptr(), x.as_ptr(), x.len(), &mut out) };
    assert_eq!(s, PbStatus::Ok);
    assert_eq!(out, 0.0);

    let t = [0.9, 0.8, 0.3];
    let n = [0.1, 0.5, 0.2, 0.85];
    let s = unsafe { pb_compute_eer(t.as_ptr(), t.len(), n.as_ptr(), n.len(), &mut out) };
    assert_eq!(s, PbStatus::Ok);
    assert_eq!(out, compute_eer(&t, &n).unwrap());
}

#[test]
fn errors_set_codes_and_messages() {
    let x = tone(10);
    let mut out = 0.0;
    let s = unsafe { pb_si_snr(ptr::null(), x.as_ptr(), x.len(), &mut out) };
    assert_eq!(s, PbStatus::NullPointer);
    assert!(last_error().contains("estimate"));

    let s = unsafe { pb_compute_eer(x.as_ptr(), 0, x.as_ptr(), 3, &mut out) };
    assert_eq!(s, PbStatus::InvalidInput);
    assert!(last_error().contains("EER"));

    let bad = [f64::NAN; 4];
    let mut buf = [0.0; 4];
    let s = unsafe { pb_defend(PbDefense::Quantize, 256.0, 0, bad.as_ptr(), 4, buf.as_mut_ptr()) };
    assert_ne!(s, PbStatus::Ok);

    let s = unsafe { pb_defend(PbDefense::Median, 2.5, 0, x.as_ptr(), x.len(), buf.as_mut_ptr()) };
    assert_eq!(s, PbStatus::InvalidInput);

    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    let mut enc = ptr::null_mut();
    let s = unsafe { pb_encoder_load(missing.as_ptr(), &mut enc) };
    assert_eq!(s, PbStatus::Io);
    assert!(enc.is_null());
}

#[test]
fn defenses_preserve_length_and_range() {
    let x = tone(400);
    for (kind, param) in [(PbDefense::Quantize, 64.0), (PbDefense::Median, 5.0), (PbDefense::AddNoise, 10.0)] {
        let mut out = vec![0.0; x.len()];
        let s = unsafe { pb_defend(kind, param, 3, x.as_ptr(), x.len(), out.as_mut_ptr()) };
        assert_eq!(s, PbStatus::Ok, "{kind:?}: {}", last_error());
        assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(out, x);
    }
}

#[test]
fn handles_round_trip_through_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(4, 3, 0.5, 11).unwrap();
    let cfg = EncoderConfig {
        epochs: 1,
        crop_seconds: 0.5,
        ..EncoderConfig::default()
    };
    let model = train_encoder(&corpus, &cfg).unwrap();
    let enc_path = dir.path().join("enc.ckpt");
    save_encoder(&model, &enc_path).unwrap();
    let net = SsedNet::new(SsedConfig::default()).unwrap();
    let ssed_path = dir.path().join("ssed.ckpt");
    save_ssed(&net, &ssed_path).unwrap();

    let x = corpus.utterances()[0].samples().to_vec();
    unsafe {
        let c = CString::new(enc_path.to_str().unwrap()).unwrap();
        let mut enc = ptr::null_mut();
        assert_eq!(pb_encoder_load(c.as_ptr(), &mut enc), PbStatus::Ok);
        let dim = pb_encoder_embed_dim(enc);
        assert!(dim > 0);
        let mut v = vec![0.0; dim];
        assert_eq!(pb_encoder_embed(enc, x.as_ptr(), x.len(), v.as_mut_ptr(), dim), PbStatus::Ok);
        let mut cos = 0.0;
        assert_eq!(pb_cosine_score(v.as_ptr(), v.as_ptr(), dim, &mut cos), PbStatus::Ok);
        assert!((cos - 1.0).abs() < 1e-12);
        assert_eq!(
            pb_encoder_embed(enc, x.as_ptr(), x.len(), v.as_mut_ptr(), dim + 1),
            PbStatus::InvalidInput
        );

        let mut params = pb_mifgsm_default_params();
        params.iterations = 2;
        let mut adv = vec![0.0; x.len()];
        assert_eq!(pb_mifgsm_attack(enc, params, x.as_ptr(), x.len(), adv.as_mut_ptr()), PbStatus::Ok);
        let linf = x.iter().zip(&adv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(linf <= params.epsilon + 1e-12);
        pb_encoder_free(enc);

        let c = CString::new(ssed_path.to_str().unwrap()).unwrap();
        let mut ssed = ptr::null_mut();
        assert_eq!(pb_ssed_load(c.as_ptr(), &mut ssed), PbStatus::Ok);
        let mut g = vec![0.0; x.len()];
        let mut r = vec![0.0; x.len()];
        assert_eq!(pb_ssed_generate(ssed, x.as_ptr(), x.len(), g.as_mut_ptr()), PbStatus::Ok);
        assert_eq!(pb_ssed_restore(ssed, g.as_ptr(), g.len(), r.as_mut_ptr()), PbStatus::Ok);
        assert!(g.iter().chain(&r).all(|v| (-1.0..=1.0).contains(v)));
        pb_ssed_free(ssed);
        pb_ssed_free(ptr::null_mut());
    }
}
