#![allow(dead_code)]

/// EER by evaluating FAR and FRR at every candidate threshold independently
/// and interpolating across the first sign change of FAR - FRR.
pub fn brute_force_eer(target: &[f64], nontarget: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = target.iter().chain(nontarget).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let rates = |t: f64| {
        let far = nontarget.iter().filter(|&&s| s >= t).count() as f64 / nontarget.len() as f64;
        let frr = target.iter().filter(|&&s| s < t).count() as f64 / target.len() as f64;
        (far, frr)
    };
    let curve: Vec<(f64, f64)> = thresholds.iter().map(|&t| rates(t)).collect();
    let k = curve.iter().position(|(a, r)| a - r <= 0.0).expect("FAR - FRR ends at -1");
    let (far, frr) = curve[k];
    if k == 0 || far == frr {
        return far;
    }
    let (pa, pr) = curve[k - 1];
    let (dp, d) = (pa - pr, far - frr);
    pa + dp / (dp - d) * (far - pa)
}

/// Path of a small benchmark config that trains in seconds.
pub fn tiny_config_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/common/tiny.json")
}
