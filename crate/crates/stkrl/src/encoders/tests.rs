use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::kg::{EntityId, WordSource};
use crate::numerics::{finite_diff_check, GradCheckTarget, Vector};

fn rand_vec(rng: &mut impl Rng, n: usize, width: f64) -> Vector<f64> {
    Vector::from_vec((0..n).map(|_| rng.random_range(-width..=width)).collect())
}

#[test]
fn rnn_scalar_step_matches_tanh() {
    let mut p = RnnParams::<f64>::zeros(1, 1);
    p.w.set(0, 0, 1.0);
    let xs = vec![Vector::from_vec(vec![0.5])];
    let (out, tape) = rnn_forward(&p, &xs).unwrap();
    // tanh(0.5), evaluated independently
    assert!((out[0] - 0.46211715726000974).abs() < 1e-12);
    assert_eq!(tape.hidden.len(), 1);
}

#[test]
fn rnn_zero_params_stay_zero() {
    let p = RnnParams::<f64>::zeros(3, 2);
    let xs = vec![rand_vec(&mut ChaCha8Rng::seed_from_u64(0), 2, 1.0); 4];
    let (out, tape) = rnn_forward(&p, &xs).unwrap();
    assert!(out.iter().all(|&x| x == 0.0));
    assert!(tape.hidden.iter().all(|h| h.iter().all(|&x| x == 0.0)));

    // W=U=[1], b=0, zero inputs: h_2 = tanh(tanh(0)) = 0
    let mut p = RnnParams::<f64>::zeros(1, 1);
    p.w.set(0, 0, 1.0);
    p.u.set(0, 0, 1.0);
    let xs = vec![Vector::from_vec(vec![0.0]), Vector::from_vec(vec![0.0])];
    let (out, _) = rnn_forward(&p, &xs).unwrap();
    assert_eq!(out[0], 0.0);
}

#[test]
fn pooled_output_is_the_exact_mean_of_hidden_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let p = RnnParams::<f64>::random(4, 3, 0.5, &mut rng);
    let xs: Vec<_> = (0..5).map(|_| rand_vec(&mut rng, 3, 1.0)).collect();
    let (out, tape) = rnn_pool_forward(&p, &xs).unwrap();
    let mut mean = Vector::zeros(4);
    for h in &tape.hidden {
        mean.add_assign(h);
    }
    mean.scale(1.0 / 5.0);
    assert_eq!(out, mean);
}

#[test]
fn pooling_a_single_step_equals_the_plain_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = RnnParams::<f64>::random(4, 3, 0.5, &mut rng);
    let xs = vec![rand_vec(&mut rng, 3, 1.0)];
    let (plain, _) = rnn_forward(&p, &xs).unwrap();
    let (pooled, _) = rnn_pool_forward(&p, &xs).unwrap();
    assert_eq!(plain, pooled);
}

#[test]
fn lstm_zero_params_give_half_gates_and_zero_output() {
    let p = LstmParams::<f64>::zeros(2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<_> = (0..3).map(|_| rand_vec(&mut rng, 3, 1.0)).collect();
    let (out, tape) = lstm_forward(&p, &xs).unwrap();
    let states = tape.lstm.as_ref().unwrap();
    for t in 0..3 {
        for j in 0..2 {
            assert_eq!(states.input_gate[t][j], 0.5);
            assert_eq!(states.forget_gate[t][j], 0.5);
            assert_eq!(states.output_gate[t][j], 0.5);
            assert_eq!(states.update[t][j], 0.0);
            assert_eq!(states.cell[t][j], 0.0);
        }
    }
    assert!(out.iter().all(|&x| x == 0.0));
}

#[test]
fn lstm_scalar_step_matches_the_gate_recurrence() {
    // k=1, all weights 1, biases 0, x=[(1)]:
    //   i=f=o=σ(1), u=tanh(1), c1=σ(1)·tanh(1), h1=σ(1)·tanh(c1)
    // evaluated independently to 0.36960635293570576.
    let mut p = LstmParams::<f64>::zeros(1, 1);
    for g in [&mut p.input, &mut p.forget, &mut p.output, &mut p.update] {
        g.w.set(0, 0, 1.0);
        g.u.set(0, 0, 1.0);
    }
    let xs = vec![Vector::from_vec(vec![1.0])];
    let (out, _) = lstm_forward(&p, &xs).unwrap();
    assert!((out[0] - 0.36960635293570576).abs() < 1e-12, "got {}", out[0]);
}

#[test]
fn gate_and_hidden_ranges_hold_on_random_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let p = LstmParams::<f64>::random(3, 4, 2.0, &mut rng);
        let xs: Vec<_> = (0..6).map(|_| rand_vec(&mut rng, 4, 2.0)).collect();
        let (out, tape) = lstm_forward(&p, &xs).unwrap();
        let states = tape.lstm.as_ref().unwrap();
        for t in 0..6 {
            for j in 0..3 {
                for gate in [
                    &states.input_gate[t],
                    &states.forget_gate[t],
                    &states.output_gate[t],
                ] {
                    assert!(gate[j] > 0.0 && gate[j] < 1.0);
                }
                assert!(tape.hidden[t][j] > -1.0 && tape.hidden[t][j] < 1.0);
            }
        }
        assert!(out.iter().all(|&x| x > -1.0 && x < 1.0));

        let rp = RnnParams::<f64>::random(3, 4, 2.0, &mut rng);
        let (_, rtape) = rnn_forward(&rp, &xs).unwrap();
        for h in &rtape.hidden {
            assert!(h.iter().all(|&x| x > -1.0 && x < 1.0));
        }
    }
}

#[test]
fn outputs_are_sensitive_to_word_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<_> = (0..4).map(|_| rand_vec(&mut rng, 3, 1.0)).collect();
    let mut reversed = xs.clone();
    reversed.reverse();

    let rp = RnnParams::<f64>::random(4, 3, 0.7, &mut rng);
    let (a, _) = rnn_forward(&rp, &xs).unwrap();
    let (b, _) = rnn_forward(&rp, &reversed).unwrap();
    assert_ne!(a, b);

    let lp = LstmParams::<f64>::random(4, 3, 0.7, &mut rng);
    let (a, _) = lstm_forward(&lp, &xs).unwrap();
    let (b, _) = lstm_forward(&lp, &reversed).unwrap();
    assert_ne!(a, b);
}

#[test]
fn empty_input_and_bad_shapes_are_rejected() {
    let p = RnnParams::<f64>::zeros(2, 3);
    assert!(matches!(
        rnn_forward(&p, &[]),
        Err(crate::Error::Argument(_))
    ));
    let xs = vec![Vector::<f64>::zeros(4)];
    assert!(matches!(
        rnn_forward(&p, &xs),
        Err(crate::Error::Config(_))
    ));
    let lp = LstmParams::<f64>::zeros(2, 3);
    assert!(matches!(
        lstm_forward(&lp, &xs),
        Err(crate::Error::Config(_))
    ));
}

#[test]
fn tape_and_params_variants_must_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rnn = EncoderParams::<f64>::random(EncoderKind::Rnn, 2, 3, 0.5, &mut rng);
    let lstm = EncoderParams::<f64>::random(EncoderKind::Lstm, 2, 3, 0.5, &mut rng);
    let xs = vec![rand_vec(&mut rng, 3, 1.0)];
    let (_, tape) = match &rnn {
        EncoderParams::Rnn(p) => rnn_forward(p, &xs).unwrap(),
        _ => unreachable!(),
    };
    let up = Vector::zeros(2);
    assert!(encoder_backward(&rnn, &tape, &up).is_ok());
    assert!(matches!(
        encoder_backward(&lstm, &tape, &up),
        Err(crate::Error::Usage(_))
    ));
}

#[test]
fn zero_upstream_zeroes_every_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let params = EncoderParams::<f64>::random(EncoderKind::Lstm, 3, 4, 0.5, &mut rng);
    let xs: Vec<_> = (0..3).map(|_| rand_vec(&mut rng, 4, 1.0)).collect();
    let (_, tape) = match &params {
        EncoderParams::Lstm(p) => lstm_forward(p, &xs).unwrap(),
        _ => unreachable!(),
    };
    let back = encoder_backward(&params, &tape, &Vector::zeros(3)).unwrap();
    for (_, slice) in back.grads.table_slices() {
        assert!(slice.iter().all(|&g| g == 0.0));
    }
    for dx in &back.inputs {
        assert!(dx.iter().all(|&g| g == 0.0));
    }
}

#[test]
fn pooled_upstream_is_spread_evenly() {
    // With U = 0 the recurrence has no cross-step coupling, so each step's
    // bias gradient is exactly (upstream/n) ⊙ (1 - h_t²) summed over steps.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut p = RnnParams::<f64>::random(2, 2, 0.5, &mut rng);
    p.u = crate::numerics::Matrix::zeros(2, 2);
    let xs: Vec<_> = (0..2).map(|_| rand_vec(&mut rng, 2, 1.0)).collect();
    let (_, tape) = rnn_pool_forward(&p, &xs).unwrap();
    let upstream = Vector::from_vec(vec![1.0, -2.0]);
    let back = encoder_backward(&EncoderParams::Rnn(p), &tape, &upstream).unwrap();
    let gb = match &back.grads {
        EncoderParams::Rnn(g) => &g.b,
        _ => unreachable!(),
    };
    let mut expect = Vector::<f64>::zeros(2);
    for h in &tape.hidden {
        for j in 0..2 {
            expect[j] += upstream[j] / 2.0 * (1.0 - h[j] * h[j]);
        }
    }
    for j in 0..2 {
        assert!((gb[j] - expect[j]).abs() < 1e-14);
    }
}

#[test]
fn embedding_concatenates_word_and_position_features() {
    let words = WordFeatureTable::from_parts(
        2,
        vec![Vector::from_vec(vec![1.0f64, 2.0])],
        vec![WordSource::Loaded],
    );
    let positions = PositionFeatureTable::from_rows(
        1,
        vec![
            Vector::from_vec(vec![-0.5f64]),
            Vector::from_vec(vec![0.5f64]),
            Vector::from_vec(vec![1.5f64]),
        ],
    )
    .unwrap();
    let s = crate::kg::ReferenceSentence::new(EntityId(0), vec![WordId(0)], 0, 1).unwrap();
    let xs = embed_sentence(&s, &words, &positions).unwrap();
    assert_eq!(xs.len(), 1);
    assert_eq!(xs[0].as_slice(), &[1.0, 2.0, 0.5]);

    let bad = crate::kg::ReferenceSentence::new(EntityId(0), vec![WordId(9)], 0, 1).unwrap();
    assert!(matches!(
        embed_sentence(&bad, &words, &positions),
        Err(crate::Error::Vocab(_))
    ));
}

#[test]
fn input_gradients_are_routed_to_words_and_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let k_w = 3;
    let k_p = 2;
    let words = WordFeatureTable::<f64>::random(4, k_w, &mut rng);
    let positions = PositionFeatureTable::<f64>::random(2, k_p, 0.5, &mut rng);
    // tokens 1, 2, 1 — word 1 repeats; anchor 1 → position ids [-1, 0, 1]
    let s = crate::kg::ReferenceSentence::new(
        EntityId(0),
        vec![WordId(1), WordId(2), WordId(1)],
        1,
        2,
    )
    .unwrap();
    let params = EncoderParams::<f64>::random(EncoderKind::Rnn, 3, k_w + k_p, 0.5, &mut rng);
    let (_, tape) = encode_sentence(&params, EncoderKind::Rnn, &s, &words, &positions).unwrap();
    let upstream = rand_vec(&mut rng, 3, 1.0);
    let back = encoder_backward(&params, &tape, &upstream).unwrap();

    // word 1 collects the word-part of dx_1 and dx_3
    let mut expect = Vector::zeros(k_w);
    for t in [0usize, 2] {
        expect.add_assign(&Vector::from_vec(back.inputs[t].as_slice()[..k_w].to_vec()));
    }
    assert_eq!(back.words.get(&WordId(1)).unwrap(), &expect);
    assert_eq!(back.words.len(), 2);

    // position -1 appears only at t=0
    let expect_pos = Vector::from_vec(back.inputs[0].as_slice()[k_w..].to_vec());
    assert_eq!(back.positions.get(&-1).unwrap(), &expect_pos);
    assert_eq!(back.positions.len(), 3);
}

/// Wraps an encoder + fixed input/upstream as a coordinate-indexed target:
/// parameters first (serialization order), then the flattened inputs.
struct EncoderTarget {
    params: EncoderParams<f64>,
    xs: Vec<Vector<f64>>,
    upstream: Vector<f64>,
    kind: EncoderKind,
    analytic_params: Vec<f64>,
    analytic_inputs: Vec<Vector<f64>>,
    param_coords: usize,
    input_dim: usize,
}

impl EncoderTarget {
    fn new(kind: EncoderKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 4;
        let input_dim = 5;
        let n = rng.random_range(1..=5);
        let params = EncoderParams::<f64>::random(kind, k, input_dim, 0.5, &mut rng);
        let xs: Vec<_> = (0..n).map(|_| rand_vec(&mut rng, input_dim, 1.0)).collect();
        let upstream = rand_vec(&mut rng, k, 1.0);

        let (_, tape) = run_forward(&params, kind, &xs);
        let back = encoder_backward(&params, &tape, &upstream).unwrap();
        let analytic_params = back
            .grads
            .table_slices()
            .into_iter()
            .flat_map(|(_, s)| s.to_vec())
            .collect::<Vec<_>>();
        let param_coords = params.coord_count();
        EncoderTarget {
            params,
            xs,
            upstream,
            kind,
            analytic_params,
            analytic_inputs: back.inputs,
            param_coords,
            input_dim,
        }
    }
}

fn run_forward(
    params: &EncoderParams<f64>,
    kind: EncoderKind,
    xs: &[Vector<f64>],
) -> (Vector<f64>, EncoderTape<f64>) {
    match (params, kind) {
        (EncoderParams::Rnn(p), EncoderKind::Rnn) => rnn_forward(p, xs).unwrap(),
        (EncoderParams::Rnn(p), EncoderKind::RnnPool) => rnn_pool_forward(p, xs).unwrap(),
        (EncoderParams::Lstm(p), EncoderKind::Lstm) => lstm_forward(p, xs).unwrap(),
        _ => unreachable!(),
    }
}

impl GradCheckTarget<f64> for EncoderTarget {
    fn coord_count(&self) -> usize {
        self.param_coords + self.xs.len() * self.input_dim
    }

    fn label(&self, i: usize) -> String {
        if i < self.param_coords {
            let mut offset = i;
            for (name, slice) in self.params.table_slices() {
                if offset < slice.len() {
                    return name;
                }
                offset -= slice.len();
            }
            unreachable!()
        } else {
            "input".to_string()
        }
    }

    fn get(&self, i: usize) -> f64 {
        if i < self.param_coords {
            let mut offset = i;
            for (_, slice) in self.params.table_slices() {
                if offset < slice.len() {
                    return slice[offset];
                }
                offset -= slice.len();
            }
            unreachable!()
        } else {
            let j = i - self.param_coords;
            self.xs[j / self.input_dim][j % self.input_dim]
        }
    }

    fn set(&mut self, i: usize, value: f64) {
        if i < self.param_coords {
            let mut offset = i;
            for (_, slice) in self.params.table_slices_mut() {
                if offset < slice.len() {
                    slice[offset] = value;
                    return;
                }
                offset -= slice.len();
            }
            unreachable!()
        } else {
            let j = i - self.param_coords;
            self.xs[j / self.input_dim][j % self.input_dim] = value;
        }
    }

    fn loss(&mut self) -> crate::Result<f64> {
        let (out, _) = run_forward(&self.params, self.kind, &self.xs);
        Ok(out.dot(&self.upstream))
    }

    fn analytic(&self, i: usize) -> f64 {
        if i < self.param_coords {
            self.analytic_params[i]
        } else {
            let j = i - self.param_coords;
            self.analytic_inputs[j / self.input_dim][j % self.input_dim]
        }
    }
}

#[test]
fn backward_matches_finite_differences_for_all_kinds() {
    for kind in [EncoderKind::Rnn, EncoderKind::RnnPool, EncoderKind::Lstm] {
        for seed in 0..20u64 {
            let mut target = EncoderTarget::new(kind, 1000 + seed);
            let report = finite_diff_check(&mut target, 1e-5, 1e-4).unwrap();
            assert!(
                report.pass,
                "{} seed {} failed: {:?}",
                kind.as_str(),
                seed,
                report.worst
            );
        }
    }
}
