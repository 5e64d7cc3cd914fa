use std::sync::LazyLock;

use jopeq::codec::{decode, encode, scale_coefficient, sub_vector_count, Dither, EncodedUpdate};
use jopeq::dither::{dither_for, dq, sdq, stream, SharedRandomness, DOMAIN_PRIVATE};
use jopeq::lattice::{Lattice, LatticeFamily};
use proptest::prelude::*;

static LATTICES: LazyLock<Vec<Lattice>> = LazyLock::new(|| {
    let mut v = Vec::new();
    for family in [LatticeFamily::Scalar, LatticeFamily::Square, LatticeFamily::Hexagonal] {
        for rate in [1, 3, 5] {
            v.push(Lattice::new(family, 3.0, rate).unwrap());
        }
    }
    v
});

fn lattice() -> impl Strategy<Value = &'static Lattice> {
    (0..LATTICES.len()).prop_map(|i| &LATTICES[i])
}

fn dist2(a: &[f64], b: &[f64], dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]).powi(2)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn nearest_point_is_idempotent(lat in lattice(), x in -20.0..20.0f64, y in -20.0..20.0f64) {
        let p = lat.nearest_point(&[x, y]);
        let q = lat.nearest_point(&p.coords);
        prop_assert_eq!(p.l, q.l);
        prop_assert_eq!(p.coords, q.coords);
    }

    #[test]
    fn nearest_point_beats_every_neighbour(lat in lattice(), x in -20.0..20.0f64, y in -20.0..20.0f64) {
        let dim = lat.dimension();
        let p = lat.nearest_point(&[x, y]);
        let d = dist2(&[x, y], &p.coords, dim);
        let g = lat.generator();
        let span = if dim == 1 { 0 } else { 2 };
        for a in -2i64..=2 {
            for b in -span..=span {
                let l = [p.l[0] + a, p.l[1] + b];
                let c = [g[0][0] * l[0] as f64 + g[0][1] * l[1] as f64, g[1][0] * l[0] as f64 + g[1][1] * l[1] as f64];
                prop_assert!(d <= dist2(&[x, y], &c, dim) + 1e-12);
            }
        }
    }

    #[test]
    fn quantization_error_lies_in_basic_cell(lat in lattice(), x in -20.0..20.0f64, y in -20.0..20.0f64) {
        let p = lat.nearest_point(&[x, y]);
        let e = [x - p.coords[0], y - p.coords[1]];
        let v = lat.cell_volume();
        // shrink by a hair so boundary rounding cannot flip membership
        let e = [e[0] * (1.0 - 1e-9), e[1] * (1.0 - 1e-9)];
        prop_assert!(lat.in_basic_cell(&e), "{:?} vol {}", e, v);
    }

    #[test]
    fn clipped_quantizer_stays_in_codebook(lat in lattice(), x in -20.0..20.0f64, y in -20.0..20.0f64) {
        let q = lat.quantize_clipped(&[x, y]).unwrap();
        prop_assert!((q.index as usize) < lat.codebook_size());
        prop_assert!(u64::from(q.index) < 1u64 << lat.index_bits());
        prop_assert_eq!(lat.point(q.index).unwrap(), q.point);
        let np = lat.nearest_point(&[x, y]);
        prop_assert_eq!(q.overloaded, lat.index_of(np.l).is_none());
        if !q.overloaded {
            prop_assert_eq!(q.point, np.coords);
        }
    }

    #[test]
    fn scalar_overload_threshold(gamma in 0.5..20.0f64, rate in 1u32..9, x in -40.0..40.0f64) {
        let lat = Lattice::scalar_uniform(gamma, rate);
        let half = lat.spacing() / 2.0;
        prop_assume!((x.abs() - gamma - half).abs() > 1e-9 * gamma);
        let over = lat.quantize_clipped(&[x, 0.0]).unwrap().overloaded;
        prop_assert_eq!(over, x.abs() > gamma + half);
    }

    #[test]
    fn scalar_overloads_non_increasing_in_gamma(g1 in 0.5..20.0f64, dg in 0.0..10.0f64, rate in 1u32..9, x in -40.0..40.0f64) {
        let small = Lattice::scalar_uniform(g1, rate);
        let large = Lattice::scalar_uniform(g1 + dg, rate);
        prop_assume!((x.abs() - g1 - small.spacing() / 2.0).abs() > 1e-9 * g1);
        let o_large = large.quantize_clipped(&[x, 0.0]).unwrap().overloaded;
        let o_small = small.quantize_clipped(&[x, 0.0]).unwrap().overloaded;
        prop_assert!(!o_large || o_small);
    }

    #[test]
    fn codebook_indexing_is_a_bijection(lat in lattice()) {
        for (i, l) in lat.codebook_coordinates().iter().enumerate() {
            prop_assert_eq!(lat.index_of(*l), Some(i as u32));
        }
        prop_assert!(lat.codebook_size() as f64 <= 2f64.powf(lat.nominal_rate() as f64 * lat.dimension() as f64) + 1.0);
    }

    #[test]
    fn cell_cf_is_real_even_and_bounded(lat in lattice(), t0 in -10.0..10.0f64, t1 in -10.0..10.0f64) {
        let a = lat.cell_cf(&[t0, t1]).unwrap();
        let b = lat.cell_cf(&[-t0, -t1]).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a.abs() <= 1.0 + 1e-12);
        prop_assert!((a - lat.cell_cf_closed(&[t0, t1])).abs() < 1e-9);
        prop_assert!((lat.cell_cf(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subtractive_dither_identity(lat in lattice(), seed in any::<u64>(), i in 0u64..1000, x in -5.0..5.0f64, y in -5.0..5.0f64) {
        let d = dither_for(&SharedRandomness::new(seed, 1, 2), i, lat);
        prop_assert!(lat.in_basic_cell(&d));
        let a = dq(lat, &[x, y], &d).unwrap();
        let b = sdq(lat, &[x, y], &d).unwrap();
        prop_assert_eq!(a.index, b.index);
        for k in 0..lat.dimension() {
            prop_assert_eq!(b.value[k], a.value[k] - d[k]);
        }
    }

    #[test]
    fn payload_round_trips(
        lat in lattice(),
        h in prop::collection::vec(-3.0..3.0f64, 1..200),
        seed in any::<u64>(),
    ) {
        let dither = Dither::Shared(SharedRandomness::new(seed, 0, 0));
        let mut rng = stream(DOMAIN_PRIVATE, seed, 0, 0, 0);
        let enc = encode(&h, lat, None, &dither, &mut rng).unwrap();
        let m = sub_vector_count(h.len(), lat.dimension());
        prop_assert_eq!(enc.indices.len(), m);
        prop_assert_eq!(enc.payload_bits(), m * lat.index_bits() as usize);
        let bytes = enc.to_bytes().unwrap();
        prop_assert_eq!(bytes.len() * 8, enc.overhead_bits() + enc.payload_bits().div_ceil(8) * 8);
        let back = EncodedUpdate::from_bytes(&bytes, lat, h.len()).unwrap();
        prop_assert_eq!(&back, &enc);
        prop_assert_eq!(decode(&back, lat, &dither).unwrap(), decode(&enc, lat, &dither).unwrap());
    }

    #[test]
    fn undithered_scalar_error_is_half_a_step(h in prop::collection::vec(-3.0..3.0f64, 1..100), rate in 1u32..10) {
        let lat = Lattice::scalar_uniform(2.0 * rate as f64 + 0.25, rate);
        let mut rng = stream(DOMAIN_PRIVATE, 0, 0, 0, 0);
        let zeta = match scale_coefficient(&h, h.len()) {
            Some(z) => z,
            None => return Ok(()),
        };
        let enc = encode(&h, &lat, None, &Dither::Off, &mut rng).unwrap();
        let out = decode(&enc, &lat, &Dither::Off).unwrap();
        for (a, b) in out.iter().zip(&h) {
            if (zeta * b).abs() <= lat.gamma() {
                prop_assert!((a - b).abs() <= lat.spacing() / (2.0 * zeta) * (1.0 + 1e-12));
            }
        }
    }
}
