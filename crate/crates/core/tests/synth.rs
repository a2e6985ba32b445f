use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recap_core::filterbank::FilterBank;
use recap_core::synth::*;
use recap_core::Error;

fn small_cfg(seed: u64) -> SynthConfig {
    SynthConfig {
        n_templates: 4,
        per_template: 4,
        seed,
        side: 64,
        jpeg_quality: 75,
        split: SplitSpec { train: 2, val: 1, test: 1 },
    }
}

fn high_band_energy(fb: &FilterBank, img: &RgbImage) -> f64 {
    let bands = fb.apply(img).unwrap();
    let plane = bands.side() * bands.side();
    bands.channels.data()[2 * plane..].iter().map(|&v| (v as f64).powi(2)).sum()
}

/// Pearson correlation matrix of the three channels.
fn channel_correlation(img: &RgbImage) -> [[f64; 3]; 3] {
    let n = (img.width() * img.height()) as f64;
    let mut mean = [0.0; 3];
    for p in img.pixels() {
        for c in 0..3 {
            mean[c] += p[c] as f64 / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for p in img.pixels() {
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += (p[a] as f64 - mean[a]) * (p[b] as f64 - mean[b]) / n;
            }
        }
    }
    let mut corr = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            corr[a][b] = cov[a][b] / (cov[a][a] * cov[b][b]).sqrt();
        }
    }
    corr
}

#[test]
fn templates_are_deterministic_and_distinct() {
    let a = gen_templates(12, 224, 5).unwrap();
    let b = gen_templates(12, 224, 5).unwrap();
    assert_eq!(a, b);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let differing = a[i].pixels().zip(a[j].pixels()).filter(|(p, q)| p != q).count();
            let frac = differing as f64 / (224.0 * 224.0);
            assert!(frac > 0.1, "templates {i} and {j} differ in only {frac}");
        }
    }
    assert!(matches!(gen_templates(1, 224, 0), Err(Error::Config(_))));
}

#[test]
fn identity_recapture_is_a_no_op() {
    let t = &gen_templates(2, 96, 1).unwrap()[0];
    let r = recapture(t, &RecaptureProfile::identity()).unwrap();
    let worst = t
        .as_raw()
        .iter()
        .zip(r.as_raw())
        .map(|(&a, &b)| (a as i16 - b as i16).abs())
        .max()
        .unwrap();
    assert!(worst <= 1, "{worst}");
}

#[test]
fn recapture_removes_high_band_energy() {
    let fb = FilterBank::new(10, 224).unwrap();
    let templates = gen_templates(4, 224, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for device in 0..DEVICE_PROFILES {
        let d = DeviceProfile::builtin(device).unwrap();
        for t in &templates {
            let profile = d.sample_recapture(&mut rng);
            let r = recapture(t, &profile).unwrap();
            assert!(high_band_energy(&fb, &r) < high_band_energy(&fb, t), "device {device}");
        }
    }
}

#[test]
fn color_mixing_changes_channel_correlation() {
    let t = &gen_templates(2, 128, 3).unwrap()[1];
    let mut profile = RecaptureProfile::identity();
    profile.color_matrix = [[0.9, 0.06, 0.04], [0.05, 0.9, 0.05], [0.03, 0.07, 0.9]];
    let r = recapture(t, &profile).unwrap();
    let (a, b) = (channel_correlation(t), channel_correlation(&r));
    let frob: f64 = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (a[i][j] - b[i][j]).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(frob > 1e-3, "{frob}");
}

#[test]
fn invalid_profiles_are_rejected() {
    let t = RgbImage::new(8, 8);
    let mut p = RecaptureProfile::identity();
    p.blur_sigma = 3.5;
    assert!(matches!(recapture(&t, &p), Err(Error::Config(_))));
    let mut p = RecaptureProfile::identity();
    p.resample_factor = 0.4;
    assert!(matches!(recapture(&t, &p), Err(Error::Config(_))));
    let mut p = RecaptureProfile::identity();
    p.color_matrix[0] = [1.2, 0.0, 0.0];
    assert!(matches!(recapture(&t, &p), Err(Error::Config(_))));
    let mut p = RecaptureProfile::identity();
    p.noise_sigma = -1.0;
    assert!(matches!(recapture(&t, &p), Err(Error::Config(_))));
}

#[test]
fn device_profiles_draw_from_disjoint_ranges() {
    let (a, b) = (DeviceProfile::builtin(0).unwrap(), DeviceProfile::builtin(1).unwrap());
    let disjoint = |x: (f64, f64), y: (f64, f64)| x.1 < y.0 || y.1 < x.0;
    assert!(disjoint(a.blur_sigma, b.blur_sigma));
    assert!(disjoint(a.resample_factor, b.resample_factor));
    assert!(disjoint(a.color_leak, b.color_leak));
    assert!(disjoint(a.noise_sigma, b.noise_sigma));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for d in [a, b] {
        for _ in 0..50 {
            let p = d.sample_recapture(&mut rng);
            p.validate().unwrap();
            assert!((0.5..=3.0).contains(&p.blur_sigma));
        }
    }
}

#[test]
fn jpeg_duplicates_keep_labels() {
    let samples = synthesize(&small_cfg(1)).unwrap();
    let dup = jpeg_duplicate(&samples[..6], 100).unwrap();
    for (s, d) in samples.iter().zip(&dup) {
        assert_eq!((s.label, s.template_id, s.device_profile, s.index), (d.label, d.template_id, d.device_profile, d.index));
        assert_eq!(d.quality, Quality::Jpeg(100));
        assert!(psnr(&s.image, &d.image).unwrap() >= 40.0);
    }
    assert!(matches!(jpeg_duplicate(&samples[..1], 0), Err(Error::Config(_))));
}

#[test]
fn splits_are_template_disjoint() {
    let samples = synthesize(&small_cfg(2)).unwrap();
    let (train, eval) = make_splits(&samples, &[0, 1], &[2, 3]).unwrap();
    assert!(train.iter().all(|s| s.template_id < 2));
    assert!(eval.iter().all(|s| s.template_id >= 2));
    assert_eq!(train.len() + eval.len(), samples.len());
    assert!(matches!(make_splits(&samples, &[0, 1], &[1, 2]), Err(Error::Config(_))));
}

#[test]
fn synthesize_balances_labels_and_pairs_recaptures() {
    let cfg = small_cfg(3);
    let samples = synthesize(&cfg).unwrap();
    assert_eq!(samples.len(), 4 * DEVICE_PROFILES * 4);
    let recaptured = samples.iter().filter(|s| s.label == Label::Recaptured).count();
    assert_eq!(2 * recaptured, samples.len());
    for pair in samples.chunks(2) {
        assert_eq!(pair[0].label, Label::Genuine);
        assert_eq!(pair[1].label, Label::Recaptured);
        assert_eq!((pair[0].template_id, pair[0].index), (pair[1].template_id, pair[1].index));
    }
    let bad = SynthConfig { per_template: 3, ..cfg.clone() };
    assert!(matches!(synthesize(&bad), Err(Error::Config(_))));
    let bad = SynthConfig { split: SplitSpec { train: 3, val: 1, test: 1 }, ..cfg };
    assert!(matches!(synthesize(&bad), Err(Error::Config(_))));
}

#[test]
fn corpus_on_disk_is_reproducible() {
    let cfg = small_cfg(4);
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m1 = write_corpus(d1.path(), &cfg).unwrap();
    let m2 = write_corpus(d2.path(), &cfg).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(load_manifest(d1.path()).unwrap(), m1);
    assert_eq!(m1.samples.len(), 2 * 4 * DEVICE_PROFILES * 4);

    let rec = &m1.samples[0];
    assert_eq!(rec.path, std::path::Path::new("train/genuine/t00/0000_d0.png"));
    let jpg = m1.samples.iter().find(|s| s.quality == Quality::Jpeg(75)).unwrap();
    assert_eq!(jpg.path.extension().unwrap(), "jpg");
    let img = load_image(d1.path(), rec).unwrap();
    assert_eq!(img.dimensions(), (64, 64));

    assert_eq!(m1.select(Split::Test, 1, Quality::Lossless).len(), 4);
    assert!(m1.select(Split::Test, 1, Quality::Lossless).iter().all(|s| s.template_id == 3));

    std::fs::write(d1.path().join(&rec.path), b"tampered").unwrap();
    assert!(matches!(load_image(d1.path(), rec), Err(Error::Io { .. })));
}

#[test]
fn overlapping_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = write_corpus(dir.path(), &small_cfg(5)).unwrap();
    m.samples[0].split = Split::Test;
    assert!(matches!(m.check_template_disjoint(), Err(Error::Config(_))));
}

#[test]
fn recaptures_carry_less_high_band_energy_on_average() {
    let cfg = SynthConfig {
        per_template: 4,
        ..SynthConfig::default()
    };
    let fb = FilterBank::new(10, 224).unwrap();
    let samples = synthesize(&cfg).unwrap();
    let mean = |label: Label| {
        let e: Vec<f64> = samples.iter().filter(|s| s.label == label).map(|s| high_band_energy(&fb, &s.image)).collect();
        e.iter().sum::<f64>() / e.len() as f64
    };
    assert!(mean(Label::Recaptured) < mean(Label::Genuine));
}
