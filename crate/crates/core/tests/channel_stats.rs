use hrris::channel::{
    db_to_linear, distance, gen_hop1, gen_hop2, generate_channels, path_loss_db, steering_vector,
    FadingSpec, Geometry, Hop1Kind, PathLossModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 10_000;

fn linear_loss(exp: f64, a: hrris::Point2, b: hrris::Point2) -> f64 {
    db_to_linear(path_loss_db(distance(a, b), exp, &PathLossModel::default()).unwrap())
}

#[test]
fn per_entry_power_matches_path_loss() {
    let spec = FadingSpec::default();
    let geom = Geometry::default();
    let pl = PathLossModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut p1, mut p2) = (0.0, 0.0);
    for _ in 0..DRAWS {
        let h = generate_channels(&spec, &geom, &pl, &mut rng).unwrap();
        p1 += h.h1.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.h1.len() as f64;
        p2 += h.h2.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.h2.len() as f64;
    }
    let l1 = linear_loss(pl.exponent_hop1, geom.bs_pos, geom.surface_pos);
    let l2 = linear_loss(pl.exponent_hop2, geom.surface_pos, geom.ms_pos);
    let (r1, r2) = (p1 / DRAWS as f64 / l1, p2 / DRAWS as f64 / l2);
    assert!((r1 - 1.0).abs() < 0.02, "hop 1 power ratio {r1}");
    assert!((r2 - 1.0).abs() < 0.02, "hop 2 power ratio {r2}");
}

#[test]
fn scattered_part_is_zero_mean_with_rician_split() {
    // Entry (0, 0): LoS part is exactly sqrt(L * k / (1 + k)) times a unit phasor.
    let spec = FadingSpec {
        surface_elements: 3,
        bs_antennas: 2,
        ..FadingSpec::default()
    };
    let geom = Geometry::default();
    let pl = PathLossModel::default();
    let l = linear_loss(pl.exponent_hop1, geom.bs_pos, geom.surface_pos);
    let k = 10f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut los = spec;
    los.hop1 = Hop1Kind::PureLos;
    let mean_los = gen_hop1(&los, &geom, &pl, &mut rng).unwrap();
    let mut sum = hrris::linalg::ZERO;
    let mut sq = 0.0;
    for _ in 0..DRAWS {
        let h = gen_hop1(&spec, &geom, &pl, &mut rng).unwrap();
        let d = h[(1, 1)] - mean_los[(1, 1)] * (k / (1.0 + k)).sqrt();
        sum += d;
        sq += d.norm_sqr();
    }
    let var = sq / DRAWS as f64;
    assert!((var / (l / (1.0 + k)) - 1.0).abs() < 0.05, "scatter variance ratio {}", var / (l / 11.0));
    // three standard errors of the complex mean
    let se = (var / DRAWS as f64).sqrt();
    assert!(sum.norm() / DRAWS as f64 <= 3.0 * se);
}

#[test]
fn rayleigh_entries_have_zero_mean() {
    let spec = FadingSpec {
        surface_elements: 4,
        ..FadingSpec::default()
    };
    let geom = Geometry::default();
    let pl = PathLossModel::default();
    let l = linear_loss(pl.exponent_hop2, geom.surface_pos, geom.ms_pos);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sum_re = 0.0;
    let mut sum_im = 0.0;
    for _ in 0..DRAWS {
        let h = gen_hop2(&spec, &geom, &pl, &mut rng).unwrap();
        sum_re += h[(0, 0)].re;
        sum_im += h[(0, 0)].im;
    }
    let se = (l / 2.0 / DRAWS as f64).sqrt();
    assert!((sum_re / DRAWS as f64).abs() <= 3.0 * se);
    assert!((sum_im / DRAWS as f64).abs() <= 3.0 * se);
}

#[test]
fn pure_los_rank_one_at_full_size() {
    let spec = FadingSpec {
        hop1: Hop1Kind::PureLos,
        ..FadingSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = gen_hop1(&spec, &Geometry::default(), &PathLossModel::default(), &mut rng).unwrap();
    let sv = h.singular_values();
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    assert!(s[1] < 1e-10 * s[0]);
}

#[test]
fn steering_vectors_have_unit_modulus() {
    for (n, spacing, axis) in [(1, 0.5, 0.0), (8, 0.5, 90.0), (100, 0.37, 33.0)] {
        let dir = (0.6, -0.8);
        for z in steering_vector(n, spacing, axis, dir) {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }
}
