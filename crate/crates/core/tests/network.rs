#![allow(clippy::needless_range_loop)]

mod support;

use iclabel_core::matreader::parse_mat;
use iclabel_core::network::conv::{conv2d, ConvGeometry, Volume};
use iclabel_core::network::{
    mirror, shape_chain, softmax, softmax7, FeatureBatch, NetworkError, NetworkWeights,
    ARCHITECTURE, N_CLASSES, TOPO_LEN,
};
use iclabel_core::spectral::PSD_LEN;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use support::matwrite::MatWriter;
use support::{oracles, synth};

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-0.99..0.99)).collect()
}

fn random_batch(seed: u64, n: usize) -> FeatureBatch {
    let mut r = synth::rng(seed);
    let topo = uniform(&mut r, n * TOPO_LEN);
    let psd = uniform(&mut r, n * PSD_LEN);
    let acf = uniform(&mut r, n * PSD_LEN);
    FeatureBatch::new(n, topo, psd, acf).unwrap()
}

fn oracle_net(w: &NetworkWeights) -> oracles::OracleNet<'_> {
    let layers: Vec<_> = w.layers().map(|(_, p)| p).collect();
    oracles::OracleNet {
        kernels: layers.iter().map(|p| p.weight.as_slice()).collect(),
        biases: layers.iter().map(|p| p.bias.as_slice()).collect(),
    }
}

#[test]
fn conv_matches_nested_loops_on_random_shapes() {
    let mut rng = synth::rng(1234);
    for case in 0..100 {
        let (kernel, stride, padding) = match case % 3 {
            0 => ((4, 4), 2, (1, 1)),
            1 => ((1, 3), 1, (0, 1)),
            _ => ((4, 4), 1, (0, 0)),
        };
        let c_in = rng.gen_range(1..=6);
        let c_out = rng.gen_range(1..=6);
        let (h, w) = if kernel.0 == 1 {
            (1, rng.gen_range(3..=40))
        } else {
            let s = rng.gen_range(2..=12) * 2;
            (s, s)
        };
        let input: Vec<f64> = (0..c_in * h * w).map(|_| synth::normal(&mut rng)).collect();
        let g = ConvGeometry {
            in_channels: c_in,
            out_channels: c_out,
            kernel,
            stride,
            padding,
        };
        let weight: Vec<f64> = (0..c_out * c_in * kernel.0 * kernel.1)
            .map(|_| synth::normal(&mut rng))
            .collect();
        let bias: Vec<f64> = (0..c_out).map(|_| synth::normal(&mut rng)).collect();
        let got = conv2d(&Volume::new(c_in, h, w, input.clone()), &g, &weight, &bias);
        let (want, oh, ow) = oracles::conv_loops(
            &input,
            (c_in, h, w),
            &weight,
            &bias,
            c_out,
            kernel,
            stride,
            padding,
        );
        assert_eq!(
            (got.channels, got.height, got.width),
            (c_out, oh, ow),
            "case {case}"
        );
        for (a, b) in got.data.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn shape_chain_is_structural() {
    let chain = shape_chain(&ARCHITECTURE).unwrap();
    assert_eq!(chain.topo_sides, vec![16, 8, 4]);
    assert_eq!(chain.concat_channels, 712);
    assert_eq!(chain.discr_out, (1, 1));
}

#[test]
fn zero_weights_give_uniform_probabilities() {
    let w = NetworkWeights::zeros();
    let batch = random_batch(5, 3);
    for logits in w.forward(&batch) {
        assert_eq!(logits, [0.0; N_CLASSES]);
    }
    for probs in [w.infer_plain(&batch), w.infer_augmented(&batch)] {
        for row in probs.rows {
            for p in row {
                assert!((p - 1.0 / 7.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn softmax_rows() {
    let p = softmax(&[0.0; N_CLASSES]);
    assert!(p.iter().all(|v| (v - 1.0 / 7.0).abs() <= 1e-12));
    let mut rng = synth::rng(17);
    for _ in 0..200 {
        let l: [f64; N_CLASSES] = std::array::from_fn(|_| rng.gen_range(-30.0..30.0));
        let c = rng.gen_range(-100.0..100.0);
        let p = softmax(&l);
        let q = softmax(&l.map(|v| v + c));
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (a, b) in p.iter().zip(q) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
    // Large logits must not overflow.
    let p = softmax(&[1000.0, 999.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(p.iter().all(|v| v.is_finite()));
}

#[test]
fn full_network_matches_loop_oracle() {
    let w = synth::random_weights(99);
    let net = oracle_net(&w);
    let batch = random_batch(2, 2);
    let logits = w.forward(&batch);
    let probs = w.infer_augmented(&batch);
    for i in 0..2 {
        let want = net.logits(batch.topo(i), batch.psd(i), batch.acf(i));
        for (a, b) in logits[i].iter().zip(want) {
            assert!(
                (a - b).abs() <= 1e-9 * (1.0 + b.abs()),
                "item {i}: {a} vs {b}"
            );
        }
        let want = net.augmented(batch.topo(i), batch.psd(i), batch.acf(i));
        for (a, b) in probs.rows[i].iter().zip(want) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!((probs.rows[i].iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn batch_items_are_independent() {
    let w = synth::random_weights(7);
    let batch = random_batch(8, 4);
    let whole = w.forward(&batch);
    for i in 0..4 {
        let single = w.forward(&batch.select(&[i]));
        for (a, b) in whole[i].iter().zip(single[0]) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
    let reversed = w.forward(&batch.select(&[3, 2, 1, 0]));
    assert_eq!(reversed[0], whole[3]);
}

#[test]
fn probabilities_are_valid_for_random_weights() {
    for seed in 0..3 {
        let w = synth::random_weights(seed);
        let probs = w.infer_plain(&random_batch(seed + 50, 3));
        for row in &probs.rows {
            assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
        assert_eq!(softmax7(&w.forward(&random_batch(seed + 50, 3))), probs);
    }
}

#[test]
fn symmetric_map_reduces_to_two_variants() {
    let w = synth::random_weights(31);
    let mut r = synth::rng(32);
    let half = uniform(&mut r, TOPO_LEN);
    let sym: Vec<f64> = half
        .iter()
        .zip(mirror(&half))
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    assert_eq!(mirror(&sym), sym);
    let psd = uniform(&mut r, PSD_LEN);
    let acf = uniform(&mut r, PSD_LEN);
    let neg: Vec<f64> = sym.iter().map(|v| -v).collect();
    let pair = FeatureBatch::new(
        2,
        [sym.clone(), neg].concat(),
        [psd.clone(), psd.clone()].concat(),
        [acf.clone(), acf.clone()].concat(),
    )
    .unwrap();
    let plain = w.infer_plain(&pair);
    let two: Vec<f64> = (0..N_CLASSES)
        .map(|k| 0.5 * (plain.rows[0][k] + plain.rows[1][k]))
        .collect();
    let single = FeatureBatch::new(1, sym, psd, acf).unwrap();
    let aug = w.infer_augmented(&single);
    for (a, b) in aug.rows[0].iter().zip(two) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn weights_round_trip_through_mat() {
    let w = synth::random_weights(4);
    let file = parse_mat(&synth::weights_mat(&w).to_bytes()).unwrap();
    let loaded = NetworkWeights::load(&file).unwrap();
    assert_eq!(loaded, w);

    let zeros = parse_mat(&synth::weights_mat(&NetworkWeights::zeros()).to_bytes()).unwrap();
    assert_eq!(
        NetworkWeights::load(&zeros).unwrap(),
        NetworkWeights::zeros()
    );
}

/// Writes every layer of `w` except the variable `skip`, optionally giving one
/// kernel the wrong extents.
fn partial_weights(
    w: &NetworkWeights,
    skip: &str,
    bad_dims: Option<(&str, Vec<usize>)>,
) -> Vec<u8> {
    let mut m = MatWriter::new();
    for (spec, p) in w.layers() {
        let wname = format!("{}_weight", spec.name);
        let bname = format!("{}_bias", spec.name);
        let mut dims = spec.weight_dims().to_vec();
        if let Some((name, d)) = &bad_dims {
            if *name == wname {
                dims = d.clone();
            }
        }
        if wname != skip {
            m.double_row_major(&wname, &dims, &p.weight);
        }
        if bname != skip {
            m.double(&bname, &[spec.out_channels, 1], &p.bias);
        }
    }
    m.to_bytes()
}

#[test]
fn load_errors() {
    let w = NetworkWeights::zeros();
    let file = parse_mat(&partial_weights(&w, "Discr_bias", None)).unwrap();
    assert_eq!(
        NetworkWeights::load(&file),
        Err(NetworkError::MissingLayer("Discr_bias".into()))
    );

    // Same element count, wrong layout.
    let bad = parse_mat(&partial_weights(
        &w,
        "",
        Some(("PSD1_weight", vec![128, 1, 3, 1])),
    ))
    .unwrap();
    match NetworkWeights::load(&bad) {
        Err(NetworkError::ShapeMismatch {
            name,
            expected,
            found,
        }) => {
            assert_eq!(name, "PSD1_weight");
            assert_eq!(expected, vec![128, 1, 1, 3]);
            assert_eq!(found, vec![128, 1, 3, 1]);
        }
        other => panic!("{other:?}"),
    }

    let mut m = MatWriter::new();
    m.text("Topo1_weight", "not numbers");
    let file = parse_mat(&m.to_bytes()).unwrap();
    assert_eq!(
        NetworkWeights::load(&file),
        Err(NetworkError::NotNumeric("Topo1_weight".into()))
    );
}

#[test]
fn non_finite_weights_are_rejected() {
    let w = NetworkWeights::from_fn(|l, k| if l == 4 && k == 10 { f64::NAN } else { 0.0 });
    let file = parse_mat(&synth::weights_mat(&w).to_bytes()).unwrap();
    assert_eq!(
        NetworkWeights::load(&file),
        Err(NetworkError::NonFinite("PSD2_weight".into()))
    );
}

#[test]
fn batch_validation() {
    assert!(matches!(
        FeatureBatch::new(
            2,
            vec![0.0; TOPO_LEN],
            vec![0.0; 2 * PSD_LEN],
            vec![0.0; 2 * PSD_LEN]
        ),
        Err(NetworkError::Batch(_))
    ));
    let mut topo = vec![0.0; TOPO_LEN];
    topo[5] = f64::NAN;
    assert!(FeatureBatch::new(1, topo, vec![0.0; PSD_LEN], vec![0.0; PSD_LEN]).is_err());
}
