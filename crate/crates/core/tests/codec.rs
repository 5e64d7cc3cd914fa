use jopeq::codec::*;
use jopeq::dither::{stream, SharedRandomness, DOMAIN_PRIVATE, DOMAIN_TEST};
use jopeq::lattice::{Lattice, LatticeFamily};
use jopeq::privacy::{build_ppn_sampler, laplace_cdf, MechanismSpec, SamplerOptions};
use jopeq::stattests::{ks_test, ks_two_sample_statistic};
use jopeq::Error;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn norm(h: &[f64]) -> f64 {
    h.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(DOMAIN_TEST, seed, 0, 0, 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn scale_coefficient_examples() {
    let h = [1.0, 0.0, 0.0];
    assert!((scale_coefficient(&h, 9).unwrap() - 1.0).abs() < 1e-15);
    let h = [2.0, 0.0];
    assert!((scale_coefficient(&h, 4).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(scale_coefficient(&[0.0, 0.0], 2), None);
}

#[test]
fn scaled_subvectors_rarely_leave_unit_ball() {
    let h = gaussian(20_000, 1);
    let m = sub_vector_count(h.len(), 2);
    let z = scale_coefficient(&h, m).unwrap();
    let out = h.chunks(2).filter(|c| z * norm(c) > 1.0).count();
    assert!((out as f64) < 0.12 * m as f64, "{out} of {m}");
}

#[test]
fn sub_vector_count_and_padding() {
    assert_eq!(sub_vector_count(4, 2), 2);
    assert_eq!(sub_vector_count(5, 2), 3);
    let lat = Lattice::new(LatticeFamily::Square, 3.0, 4).unwrap();
    let h = [0.1, -0.2, 0.3, 0.05, -0.4];
    let sr = SharedRandomness::new(5, 1, 2);
    let enc = encode(&h, &lat, None, &Dither::Shared(sr), &mut stream(DOMAIN_PRIVATE, 0, 0, 0, 0)).unwrap();
    assert_eq!(enc.indices.len(), 3);
    assert_eq!(decode(&enc, &lat, &Dither::Shared(sr)).unwrap().len(), 5);
}

#[test]
fn lattice_points_survive_exactly_without_noise_or_dither() {
    let lat = Lattice::scalar_uniform(2.0, 4);
    // unit-norm vector of multiples of Δ = 1/4, so ζh is on the lattice
    let pts = [0.75, -0.5, 0.25, 0.25, -0.25, 0.0, 0.0, 0.0, 0.0];
    assert_eq!(norm(&pts), 1.0);
    let h: Vec<f64> = pts.iter().map(|p| 3.7 * p).collect();
    let mut rng = stream(DOMAIN_PRIVATE, 0, 0, 0, 0);
    let enc = encode(&h, &lat, None, &Dither::Off, &mut rng).unwrap();
    assert_eq!(enc.overloads, 0);
    let back = decode(&enc, &lat, &Dither::Off).unwrap();
    for (a, b) in back.iter().zip(&h) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn zero_update_uses_sentinel() {
    let lat = Lattice::scalar_uniform(2.0, 2);
    let enc = encode(&[0.0; 6], &lat, None, &Dither::Off, &mut stream(DOMAIN_PRIVATE, 0, 0, 0, 0)).unwrap();
    assert_eq!(enc.zeta, 1.0);
    let zero = lat.index_of([0, 0]).unwrap();
    assert!(enc.indices.iter().all(|&i| i == zero));
    assert_eq!(decode(&enc, &lat, &Dither::Off).unwrap(), vec![0.0; 6]);
}

#[test]
fn non_finite_and_mismatched_inputs_are_rejected() {
    let lat = Lattice::scalar_uniform(2.0, 2);
    let mut rng = stream(DOMAIN_PRIVATE, 0, 0, 0, 0);
    assert!(encode(&[1.0, f64::NAN], &lat, None, &Dither::Off, &mut rng).is_err());
    let hex = Lattice::new(LatticeFamily::Hexagonal, 10.0, 4).unwrap();
    let s = build_ppn_sampler(&MechanismSpec::multivariate_t(3.0, 2, 3.0).unwrap(), &hex, &SamplerOptions::default());
    if let Ok(s) = s {
        assert!(matches!(
            encode(&[1.0], &lat, Some(&s), &Dither::Off, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}

#[test]
fn byte_layout_round_trip_and_header() {
    let lat = Lattice::scalar_uniform(2.0, 2);
    let h = gaussian(10, 2);
    let sr = SharedRandomness::new(1, 2, 3);
    let enc = encode(&h, &lat, None, &Dither::Shared(sr), &mut stream(DOMAIN_PRIVATE, 0, 0, 0, 0)).unwrap();
    let bytes = enc.to_bytes().unwrap();
    assert_eq!(&bytes[0..2], &10u16.to_be_bytes());
    assert_eq!(bytes[2], 1);
    assert_eq!(bytes[3], 2);
    assert_eq!(f64::from_be_bytes(bytes[4..12].try_into().unwrap()), enc.zeta);
    assert_eq!(u32::from_be_bytes(bytes[12..16].try_into().unwrap()), enc.overloads);
    // 5 codewords need 3 bits: 30 bits round up to 4 bytes
    assert_eq!(bytes.len(), HEADER_LEN + 4);
    let back = EncodedUpdate::from_bytes(&bytes, &lat, 10).unwrap();
    assert_eq!(back, enc);
    assert!(matches!(EncodedUpdate::from_bytes(&bytes, &lat, 11), Err(Error::CorruptPayload(_))));
    let other = Lattice::scalar_uniform(2.0, 3);
    assert!(matches!(EncodedUpdate::from_bytes(&bytes, &other, 10), Err(Error::CorruptPayload(_))));
}

#[test]
fn out_of_range_index_is_corrupt() {
    let lat = Lattice::scalar_uniform(2.0, 2);
    let enc = EncodedUpdate { indices: vec![7], zeta: 1.0, overloads: 0, dim: 1, lattice_dim: 1, rate: 2, index_bits: 3 };
    assert!(matches!(decode(&enc, &lat, &Dither::Off), Err(Error::CorruptPayload(_))));
}

#[test]
fn payload_accounting() {
    let lat = Lattice::scalar_uniform(5.0, 2);
    let h = gaussian(10_000, 3);
    let sr = SharedRandomness::new(1, 0, 0);
    let enc = encode(&h, &lat, None, &Dither::Shared(sr), &mut stream(DOMAIN_PRIVATE, 0, 0, 0, 0)).unwrap();
    // the mid-tread codebook has 2^R + 1 levels, which costs one extra bit
    assert_eq!(enc.payload_bits(), 10_000 * lat.index_bits() as usize);
    assert_eq!(enc.overhead_bits(), 128);
    assert_eq!(enc.to_bytes().unwrap().len() * 8, enc.payload_bits() + enc.overhead_bits());
    let hex = Lattice::new(LatticeFamily::Hexagonal, 5.0, 2).unwrap();
    let enc = encode(&h, &hex, None, &Dither::Shared(sr), &mut stream(DOMAIN_PRIVATE, 0, 0, 0, 0)).unwrap();
    assert!(enc.payload_bits() <= 2 * h.len());
}

#[test]
fn joint_distortion_is_laplace() {
    let lat = Lattice::scalar_uniform(9.0, 4);
    let spec = MechanismSpec::laplace(1.0, 1).unwrap();
    let s = build_ppn_sampler(&spec, &lat, &SamplerOptions::default()).unwrap();
    let mut z = Vec::new();
    for k in 0..100u64 {
        let h = gaussian(1000, 100 + k);
        let sr = SharedRandomness::new(3, k, 0);
        let mut rng = stream(DOMAIN_PRIVATE, 4, k, 0, 0);
        let enc = encode(&h, &lat, Some(&s), &Dither::Shared(sr), &mut rng).unwrap();
        let back = decode(&enc, &lat, &Dither::Shared(sr)).unwrap();
        for (a, b) in back.iter().zip(&h) {
            let v = enc.zeta * (a - b);
            // overloaded coordinates are clipped; they sit beyond the support
            if v.abs() < 9.0 - 1.0 {
                z.push(v);
            }
        }
    }
    // compare against the law conditioned on the same window
    let (lo, hi) = (laplace_cdf(-8.0, 2.0), laplace_cdf(8.0, 2.0));
    let ks = ks_test("joint distortion", &z, |x| (laplace_cdf(x, 2.0) - lo) / (hi - lo));
    assert!(ks.pass, "{ks}");
}

#[test]
fn wrong_dither_seed_inflates_distortion() {
    let lat = Lattice::scalar_uniform(3.0, 3);
    let h = gaussian(20_000, 5);
    let good = SharedRandomness::new(1, 0, 0);
    let bad = SharedRandomness::new(2, 0, 0);
    let enc = encode(&h, &lat, None, &Dither::Shared(good), &mut stream(DOMAIN_PRIVATE, 0, 0, 0, 0)).unwrap();
    let a = decode(&enc, &lat, &Dither::Shared(good)).unwrap();
    let b = decode(&enc, &lat, &Dither::Shared(bad)).unwrap();
    assert_ne!(a, b);
    let mse = |x: &[f64]| x.iter().zip(&h).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    assert!(mse(&b) > mse(&a));
}

#[test]
fn distortion_law_does_not_depend_on_input_law() {
    let lat = Lattice::scalar_uniform(9.0, 4);
    let s = build_ppn_sampler(&MechanismSpec::laplace(1.0, 1).unwrap(), &lat, &SamplerOptions::default()).unwrap();
    let n = 50_000;
    let mut rng = stream(DOMAIN_TEST, 6, 0, 0, 0);
    let inputs: [Vec<f64>; 3] = [
        gaussian(n, 7),
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect(),
        (0..n).map(|i| if i % 10 == 0 { 1.0 } else { 0.0 }).collect(),
    ];
    let errs: Vec<Vec<f64>> = inputs
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let sr = SharedRandomness::new(8, j as u64, 0);
            let enc = encode(h, &lat, Some(&s), &Dither::Shared(sr), &mut stream(DOMAIN_PRIVATE, 9, j as u64, 0, 0)).unwrap();
            let back = decode(&enc, &lat, &Dither::Shared(sr)).unwrap();
            back.iter().zip(h).map(|(a, b)| enc.zeta * (a - b)).collect()
        })
        .collect();
    for j in 1..3 {
        let d = ks_two_sample_statistic(&errs[0], &errs[j]);
        assert!(d < 0.02, "input law {j}: {d}");
    }
}

#[test]
fn overloads_non_increasing_in_support() {
    let h = gaussian(5000, 10);
    let mut prev = u32::MAX;
    for gamma in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let lat = Lattice::scalar_uniform(gamma, 3);
        let enc = encode(&h, &lat, None, &Dither::Off, &mut stream(DOMAIN_PRIVATE, 0, 0, 0, 0)).unwrap();
        assert!(enc.overloads <= prev, "γ={gamma}");
        prev = enc.overloads;
    }
}

#[test]
fn snr_examples() {
    let h = vec![gaussian(100_000, 11)];
    assert_eq!(snr_db(&h, &h), f64::INFINITY);
    let twice: Vec<Vec<f64>> = vec![h[0].iter().map(|v| 2.0 * v).collect()];
    assert!(snr_db(&h, &twice).abs() < 1e-12);
    let noise = gaussian(100_000, 12);
    let noisy: Vec<Vec<f64>> = vec![h[0].iter().zip(&noise).map(|(a, n)| a + 0.1f64.sqrt() * n).collect()];
    assert!((snr_db(&h, &noisy) - 10.0).abs() < 0.2);
}

#[test]
fn baseline_names_round_trip() {
    for b in Baseline::ALL {
        assert_eq!(b.name().parse::<Baseline>().unwrap(), b);
    }
}

#[test]
fn transport_baselines() {
    let lat = Lattice::scalar_uniform(9.0, 4);
    let spec = MechanismSpec::laplace(1.0, 1).unwrap();
    let h = gaussian(200, 13);
    let sr = SharedRandomness::new(1, 0, 0);
    for b in Baseline::ALL {
        let t = Transport::new(b, lat.clone(), spec.clone(), &SamplerOptions::default()).unwrap();
        assert_eq!(t.sampler.is_some(), b == Baseline::Jopeq);
        let out = t.transmit(&h, sr, 2).unwrap();
        assert_eq!(out.h_tilde.len(), h.len());
        assert_eq!(out.h_tilde == h, b == Baseline::Plain);
        assert_eq!(t.transmit(&h, sr, 2).unwrap(), out, "{b} not deterministic");
    }
}
