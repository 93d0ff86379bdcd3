//! Trains on a synthetic dataset and reports memorization quality.
//!
//! Usage: memorize <encoder> <aggregation> <energy> <epochs> <k> <kw> <lr> <margin> <top_m> <noise> <norm> <batch> <seed>...

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stkrl::encoders::EncoderKind;
use stkrl::evaluator::{build_eval_context, filtered_hits10, ComboKind};
use stkrl::kg::{generate_synthetic_dataset, SynthSpec};
use stkrl::model::{sample_negative, AggregationMode, EnergyMode};
use stkrl::numerics::NormKind;
use stkrl::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let encoder = EncoderKind::parse(&args[0]).unwrap();
    let aggregation = AggregationMode::parse(&args[1]).unwrap();
    let energy = EnergyMode::parse(&args[2]).unwrap();
    let epochs: usize = args[3].parse().unwrap();
    let k: usize = args[4].parse().unwrap();
    let kw: usize = args[5].parse().unwrap();
    let lr: f64 = args[6].parse().unwrap();
    let margin: f64 = args[7].parse().unwrap();
    let top_m: usize = args[8].parse().unwrap();
    let noise: usize = args[9].parse().unwrap();
    let norm = NormKind::parse(&args[10]).unwrap();
    let batch: usize = args[11].parse().unwrap();
    let sentence_length: usize = args[12].parse().unwrap();
    let vocab_size: usize = args[13].parse().unwrap();
    let refresh = stkrl::trainer::RefreshPolicy::parse(&args[14]).unwrap();
    let loss_mode = stkrl::model::LossMode::parse(&args[15]).unwrap();
    let n_entities: usize = args[16].parse().unwrap();
    let n_relations: usize = args[17].parse().unwrap();
    let n_triples: usize = args[18].parse().unwrap();
    let seeds: Vec<u64> = args[19..].iter().map(|s| s.parse().unwrap()).collect();

    for &seed in &seeds {
        let spec = SynthSpec {
            n_entities,
            n_relations,
            n_triples,
            noise_sentences: noise,
            sentence_length,
            vocab_size,
            ..SynthSpec::default()
        };
        let (kg, corpus) = generate_synthetic_dataset(&spec, seed).unwrap();
        let mut config = TrainConfig::default();
        config.hyper.k = k;
        config.hyper.k_w = kw;
        config.hyper.k_p = 4;
        config.hyper.clip_distance = 10;
        config.hyper.top_m = top_m;
        config.hyper.margin = margin;
        config.hyper.norm = norm;
        config.hyper.learning_rate = lr;
        config.hyper.batch_size = batch;
        config.hyper.epochs = epochs;
        config.hyper.seed = seed;
        config.hyper.encoder = encoder;
        config.hyper.aggregation = aggregation;
        config.hyper.energy_mode = energy;
        config.hyper.loss_mode = loss_mode;
        config.refresh = refresh;
        config.validation_interval = epochs + 1;
        let t0 = std::time::Instant::now();
        let outcome = train::<f64>(&config, &kg, &corpus, None, |_| {}).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        assert!(outcome.failure.is_none(), "{:?}", outcome.failure);
        let first = outcome.log.first().unwrap().loss;
        let last = outcome.log.last().unwrap().loss;
        let ctx = build_eval_context(&outcome.params, &corpus).unwrap();
        let train_hits = filtered_hits10(&ctx, &kg, kg.train()).unwrap();
        let test_hits = filtered_hits10(&ctx, &kg, kg.test()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
        let mut hinge_sum = [0.0f64; 4];
        let mut active = [0usize; 4];
        for t in kg.train() {
            let neg = sample_negative(t, &kg, &mut rng).unwrap();
            for (i, combo) in ComboKind::ALL.iter().enumerate() {
                let pos = ctx.combo_energy(*combo, t).unwrap();
                let negd = ctx.combo_energy(*combo, &neg.triple).unwrap();
                let h = (margin + pos - negd).max(0.0);
                hinge_sum[i] += h;
                active[i] += (h > 0.0) as usize;
            }
        }
        let n = kg.train().len() as f64;
        let mut rank1 = 0usize;
        let (mut sig_cos, mut noise_cos, mut nsig, mut nnoise) = (0.0f64, 0.0f64, 0, 0);
        for e in 0..spec.n_entities as u32 {
            let ranked =
                stkrl::model::rank_sentences(stkrl::kg::EntityId(e), &outcome.params, &corpus)
                    .unwrap();
            if ranked.first().map(|&(idx, _)| idx < spec.signal_sentences) == Some(true) {
                rank1 += 1;
            }
            for &(idx, score) in &ranked {
                if idx < spec.signal_sentences {
                    sig_cos += score;
                    nsig += 1;
                } else {
                    noise_cos += score;
                    nnoise += 1;
                }
            }
        }
        let ratio = last / first;
        println!(
            "seed {seed}: loss {first:.4} -> {last:.4} (ratio {ratio:.4}) train_hits {train_hits:.1} test_hits {test_hits:.1} signal_rank1 {rank1}/{} [{secs:.1}s]",
            spec.n_entities,
        );
        println!(
            "         hinges KK {:.3}/{} SK {:.3}/{} KS {:.3}/{} SS {:.3}/{} | cos sig {:.3} noise {:.3}",
            hinge_sum[0] / n, active[0],
            hinge_sum[1] / n, active[1],
            hinge_sum[2] / n, active[2],
            hinge_sum[3] / n, active[3],
            sig_cos / nsig.max(1) as f64,
            noise_cos / nnoise.max(1) as f64,
        );
    }
}
