use vadkit_core::config::{DfsmnConfig, EncoderConfig, HeadsConfig, ModelConfig, MultiTaskWeights, TrainConfig};
use vadkit_core::model::VadModel;
use vadkit_core::synth::{tokenize, tone_corpus, toy_vocab};
use vadkit_core::train::{fit_cmvn, prepare_example, train, Example, Objective};

fn tiny(weights: MultiTaskWeights) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig::Dfsmn(DfsmnConfig {
            input_dim: 160,
            linear_dim: 16,
            proj_dim: 32,
            blocks: 2,
            lorder: 4,
            rorder: 0,
            lstride: 1,
            rstride: 1,
        }),
        heads: HeadsConfig {
            vocab_size: 26,
            weights,
            ..HeadsConfig::default()
        },
    }
}

fn setup(weights: MultiTaskWeights, clips: usize) -> (VadModel, Vec<Example>) {
    let mut model = VadModel::new(tiny(weights), 7).unwrap();
    let vocab = toy_vocab();
    let mut ex: Vec<Example> = tone_corpus(clips, 3)
        .unwrap()
        .iter()
        .map(|c| prepare_example(&model, &c.audio, &c.segments, Some(tokenize(&c.text, &vocab))).unwrap())
        .collect();
    fit_cmvn(&mut model, &mut ex);
    (model, ex)
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn vad_loss_drops_by_an_order_of_magnitude() {
    let (mut model, ex) = setup(MultiTaskWeights::SINGLE_TASK, 40);
    let c = TrainConfig {
        learning_rate: 0.05,
        batch_size: 4,
        ..cfg(30)
    };
    let rep = train(&mut model, &ex, &c, Objective::VadOnly).unwrap();
    let (first, last) = (rep.epoch_loss[0], *rep.epoch_loss.last().unwrap());
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let (mut model, ex) = setup(MultiTaskWeights::default(), 12);
        train(&mut model, &ex, &cfg(2), Objective::MultiTask).unwrap();
        model.into_store()
    };
    let (a, b) = (run(), run());
    for ((_, p), (_, q)) in a.iter().zip(b.iter()) {
        assert!(p.data.iter().zip(&q.data).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", p.name);
    }
}

#[test]
fn zero_auxiliary_weights_bit_match_single_task() {
    let run = |objective| {
        let (mut model, ex) = setup(MultiTaskWeights::SINGLE_TASK, 12);
        let rep = train(&mut model, &ex, &cfg(2), objective).unwrap();
        (rep, model.into_store())
    };
    let ((ra, a), (rb, b)) = (run(Objective::MultiTask), run(Objective::VadOnly));
    assert_eq!(ra, rb);
    for ((_, p), (_, q)) in a.iter().zip(b.iter()) {
        assert!(p.data.iter().zip(&q.data).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", p.name);
    }
}
