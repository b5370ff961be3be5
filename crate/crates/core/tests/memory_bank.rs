use aga_core::{EmbeddingSet, MemoryBank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> EmbeddingSet<f64> {
    EmbeddingSet::new(n, dim, (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// m_k = sum over the last W frames, newest first (w = 1..), of e * s * W / w.
fn direct(history: &[(EmbeddingSet<f64>, Vec<f64>)], window: usize, k: usize) -> Vec<f64> {
    let dim = history[0].0.dim();
    let mut m = vec![0.0; dim];
    for (w, (e, s)) in history.iter().rev().take(window).enumerate() {
        let weight = s[k] * window as f64 / (w + 1) as f64;
        for (mi, x) in m.iter_mut().zip(e.row(k)) {
            *mi += x * weight;
        }
    }
    m
}

#[test]
fn readout_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for bank_id in 0..200 {
        let window = [1, 2, 5, 10][bank_id % 4];
        let n = rng.random_range(1..=4);
        let dim = rng.random_range(1..=8);
        // Partial fills as well as histories longer than the window.
        let pushes = rng.random_range(1..=2 * window + 1);
        let mut bank = MemoryBank::new(window, n, dim).unwrap();
        let mut obj = Vec::new();
        let mut app = Vec::new();
        for _ in 0..pushes {
            let eo = random_set(&mut rng, n, dim);
            let ea = random_set(&mut rng, n, dim);
            let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            bank.push(eo.clone(), ea.clone(), conf.clone()).unwrap();
            obj.push((eo, conf.clone()));
            app.push((ea, conf));
        }
        assert_eq!(bank.len(), pushes.min(window));
        let r = bank.read_memory().unwrap();
        for k in 0..n {
            for (got, want) in [(r.m_obj.row(k), direct(&obj, window, k)), (r.m_app.row(k), direct(&app, window, k))] {
                for (g, w) in got.iter().zip(&want) {
                    worst = worst.max((g - w).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn zero_confidence_frames_contribute_nothing() {
    let mut bank = MemoryBank::new(3, 1, 2).unwrap();
    let a = EmbeddingSet::from_rows(&[[1.0, 0.0]]).unwrap();
    let b = EmbeddingSet::from_rows(&[[0.0, 1.0]]).unwrap();
    bank.push(a.clone(), a.clone(), vec![1.0]).unwrap();
    bank.push(b.clone(), b, vec![0.0]).unwrap();
    let r = bank.read_memory().unwrap();
    // The older frame sits at w = 2: weight 3/2.
    assert_eq!(r.m_obj.row(0), &[1.5, 0.0]);
}
