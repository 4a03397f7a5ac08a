mod common;

use common::*;

#[test]
fn every_op_matches_central_differences() {
    for seed in 0..10 {
        for (name, inputs, build) in op_cases(seed) {
            let err = check_op(&inputs, &build);
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn every_family_matches_central_differences() {
    for (family, pooling) in FAMILIES {
        for seed in 0..10 {
            let err = check_model(family, pooling, seed, 12);
            assert!(
                err < 1e-3,
                "{family} {pooling} seed {seed}: relative error {err:e}"
            );
        }
    }
}

#[test]
fn random_three_layer_composite() {
    use rand::SeedableRng;
    for seed in 0..10 {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![
            random_tensor(&mut r, 4, 5),
            random_tensor(&mut r, 5, 6),
            random_tensor(&mut r, 1, 6),
            random_tensor(&mut r, 6, 3),
        ];
        let build: common::Build = Box::new(|g, v| {
            let h = g.matmul(v[0], v[1]).unwrap();
            let h = g.add_row(h, v[2]).unwrap();
            let h = g.tanh(h);
            let o = g.matmul(h, v[3]).unwrap();
            let s = g.softmax(o).unwrap();
            g.sigmoid(s)
        });
        let err = check_op(&inputs, &build);
        assert!(err < 1e-4, "seed {seed}: {err:e}");
    }
}
