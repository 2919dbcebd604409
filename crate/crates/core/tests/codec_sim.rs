use privregion::codec::{decode, encode, generate_codebook, measure_exact, measure_mc};
use privregion::model::{EncodedSet, SourceModel, SourceSpec};
use privregion::prob::Channel;
use privregion::types::is_cond_typical;
use proptest::prelude::*;

fn source() -> SourceModel<f64> {
    SourceSpec {
        sizes: vec![2, 2, 2],
        revealed: vec![0],
        hidden: vec![1, 2],
        joint: vec![0.20, 0.05, 0.10, 0.05, 0.05, 0.10, 0.10, 0.35],
        recon_size: None,
        distortion: None,
    }
    .build()
    .unwrap()
}

fn channel_for(e_size: usize) -> Channel<f64> {
    let rows: Vec<Vec<f64>> = (0..e_size)
        .map(|i| if i < e_size / 2 { vec![0.85, 0.15] } else { vec![0.2, 0.8] })
        .collect();
    Channel::from_rows(&rows).unwrap()
}

#[test]
fn encoder_output_is_the_smallest_typical_index() {
    let src = source();
    let e = EncodedSet::new(vec![0, 1]);
    let view = src.view(&e).unwrap();
    let w = channel_for(view.e_size);
    let cb = generate_codebook(&src, &e, &w, 5, 0.6, 0.3, 2).unwrap();
    // Backward channel p(x_E | x̂) from the induced joint, computed here.
    let enc = view.encoded_joint(&w);
    let mut back = vec![vec![0.0; view.e_size]; 2];
    for b in 0..2 {
        let col: f64 = (0..view.e_size).map(|x| enc[x * 2 + b]).sum();
        for x in 0..view.e_size {
            back[b][x] = enc[x * 2 + b] / col;
        }
    }
    let back = Channel::from_rows(&back).unwrap();
    let mut x = vec![0; 5];
    for idx in 0..view.e_size.pow(5) {
        let mut r = idx;
        for t in (0..5).rev() {
            x[t] = r % view.e_size;
            r /= view.e_size;
        }
        let j = encode(&cb, &x).unwrap();
        let typical = |k: usize| is_cond_typical(&x, decode(&cb, k).unwrap(), &back, cb.delta).unwrap();
        if j < cb.m_n {
            assert!(typical(j));
        }
        assert!((1..j.min(cb.m_n)).all(|k| !typical(k)));
    }
    assert!(decode(&cb, 0).is_err() && decode(&cb, cb.m_n + 1).is_err());
}

#[test]
fn monte_carlo_agrees_with_exact_distortion() {
    let src = source();
    let e = EncodedSet::new(vec![0, 1, 2]);
    let w = channel_for(8);
    let cb = generate_codebook(&src, &e, &w, 5, 0.7, 0.3, 5).unwrap();
    let (exact, _) = measure_exact(&src, &e, &w, &cb).unwrap();
    let mc = measure_mc(&src, &e, &w, &cb, 40_000, 1).unwrap();
    let se = mc.u_n_stderr.unwrap();
    assert!((mc.u_n - exact.u_n).abs() <= 5.0 * se, "{} vs {} (se {se})", mc.u_n, exact.u_n);
    assert_eq!(mc.m_n, exact.m_n);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exact_identities_hold_for_any_codebook(seed in any::<u64>(), case in 0usize..3, n in 3usize..6, rate in 0.2f64..0.9) {
        let src = source();
        let e = EncodedSet::new((0..=case).collect());
        let view = src.view(&e).unwrap();
        let w = channel_for(view.e_size);
        let cb = generate_codebook(&src, &e, &w, n, rate, 0.35, seed).unwrap();
        let (m, sets) = measure_exact(&src, &e, &w, &cb).unwrap();
        prop_assert!(sets.mass_identity && sets.max_identity_diff == 0.0);
        prop_assert!(sets.exact_arithmetic);
        prop_assert!(sets.tilde_within_b() && sets.a_is_partition());
        let total: f64 = sets.pr_j.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let e_n = m.e_n.unwrap();
        // e_n lies between H(X_H | X_E) and H(X_H).
        let hidden = src.hidden_entropy();
        let joint = src.joint();
        let mut union: Vec<usize> = vec![1, 2];
        union.extend(e.attrs());
        union.sort_unstable();
        union.dedup();
        let h_given = privregion::prob::joint_entropy(joint, &union).unwrap()
            - privregion::prob::joint_entropy(joint, e.attrs()).unwrap();
        prop_assert!(e_n >= h_given - 1e-9 && e_n <= hidden + 1e-9);
        prop_assert!((m.l_n.unwrap() - (hidden - e_n)).abs() < 1e-12);
    }
}
