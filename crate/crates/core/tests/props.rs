use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikescan::neurons::{
    DsnNeuron, DsnParams, LifNeuron, NeuronConfig, PsnKind, PsnNeuron, PsnParams, ResetMode,
};
use spikescan::props::*;

fn if_neuron(reset: ResetMode) -> LifNeuron {
    LifNeuron::new(NeuronConfig::integrate_and_fire(reset))
}

fn lif(reset: ResetMode) -> LifNeuron {
    LifNeuron::new(NeuronConfig::lif(0.5, reset))
}

fn dsn_probe(seed: u64) -> DsnProbe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DsnProbe::new(DsnParams::init(1, 4, &mut rng)).unwrap()
}

#[test]
fn hard_reset_has_both_controls() {
    for n in [if_neuron(ResetMode::Hard), lif(ResetMode::Hard)] {
        for delta in [1, 4, 8] {
            let v = check_short_control(&n, delta, 2000, 1).unwrap();
            assert!(v.holds, "{} delta {delta}: {:?}", MembraneModel::name(&n), v.witness);
        }
        assert!(check_long_control(&n, 3.0, 200, 500, 2).unwrap().holds);
    }
}

#[test]
fn soft_if_has_neither_control() {
    let n = if_neuron(ResetMode::Soft);
    let v = check_short_control(&n, 4, 1000, 3).unwrap();
    assert!(!v.holds);
    let w = v.witness.unwrap();
    assert!(replay_witness(&n, &w).unwrap());

    let v = check_long_control(&n, 2.0, 100, 10, 3).unwrap();
    assert!(!v.holds);
    let w = v.witness.unwrap();
    assert!(replay_witness(&n, &w).unwrap());
    // H_t = tC - (t-1)V_th under constant input.
    let t = w.index + 1;
    assert_eq!(w.trace[w.index], t as f64 * 2.0 - (t as f64 - 1.0));
}

#[test]
fn soft_lif_long_but_not_short() {
    let n = lif(ResetMode::Soft);
    for delta in [1, 4, 16] {
        let v = check_short_control(&n, delta, 500, 4).unwrap();
        assert!(!v.holds, "delta {delta}");
        assert!(replay_witness(&n, v.witness.as_ref().unwrap()).unwrap());
    }
    assert!(check_long_control(&n, 3.0, 200, 500, 4).unwrap().holds);
}

#[test]
fn counterexample_keeps_soft_if_firing() {
    let small = [0.2; 4];
    let seq = construct_soft_reset_counterexample(4, 1.0, &small).unwrap();
    let soft = if_neuron(ResetMode::Soft).membrane(&seq).unwrap();
    assert!(soft.iter().all(|&h| h >= 1.0), "{soft:?}");
    let hard = if_neuron(ResetMode::Hard).membrane(&seq).unwrap();
    assert!(hard[0] >= 1.0 && hard[1..].iter().all(|&h| h < 1.0));

    let one = construct_soft_reset_counterexample(1, 1.0, &[0.0]).unwrap();
    assert!(one[0] > 2.0);
    assert!(if_neuron(ResetMode::Soft).membrane(&one).unwrap()[1] >= 1.0);
}

#[test]
fn dsn_long_control_and_windowed_short_control() {
    let probe = dsn_probe(5);
    assert!(check_long_control(&probe, 3.0, 256, 300, 6).unwrap().holds);
    let windowed = WindowedDsn {
        params: probe.params.clone(),
        v_th: 1.0,
        margin: 0.9,
    };
    for delta in [1, 3, 8] {
        assert!(check_short_control(&windowed, delta, 1000, 7).unwrap().holds);
    }
}

#[test]
fn duration_schedule_controls_spike_count() {
    let xs = [0.1, -0.3, 0.2, 0.0, 0.05, 0.1];
    for tau in 1..=xs.len() {
        let alphas = duration_schedule(5.0, &xs, 1.0, tau, 0.5).unwrap();
        let h = replay_schedule(5.0, &alphas, &xs);
        for (i, &v) in h.iter().enumerate() {
            let step = i + 1;
            if step < tau {
                assert!(v >= 1.0, "tau {tau} step {step}: {v}");
            } else {
                assert!(v < 1.0, "tau {tau} step {step}: {v}");
            }
        }
    }
}

#[test]
fn nonlinearity_witnesses() {
    let linear = LifNeuron::new(NeuronConfig::lif(0.5, ResetMode::None));
    let gap = additivity_gap(&linear, &[0.3, 2.0, -1.0, 4.0], &[1.0, 0.5, 0.25, -2.0]).unwrap();
    assert!(gap <= 1e-12);
    assert!(find_nonlinearity(&linear, 16, 50, 1e-9, 1).unwrap().is_none());
    assert!(find_nonlinearity(&lif(ResetMode::Hard), 16, 50, 1e-9, 1).unwrap().is_some());
    assert!(find_nonlinearity(&dsn_probe(2), 16, 50, 1e-9, 1).unwrap().is_some());
}

#[test]
fn delta_search_and_lemma() {
    assert_eq!(search_delta(&if_neuron(ResetMode::Hard), 64, 200, 0).unwrap(), Some(1));
    assert_eq!(search_delta(&if_neuron(ResetMode::Soft), 8, 200, 0).unwrap(), None);
    assert!(lemma_holds(64));
}

#[test]
fn conditions_table_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let row = |c1, c2, c3| ConditionsRow {
        condition1: c1,
        condition2: c2,
        condition3: c3,
    };
    let lif = LifNeuron::new(NeuronConfig::lif(0.5, ResetMode::Hard));
    assert_eq!(check_conditions_table(&lif, 0).unwrap(), row(true, true, false));
    let psn = PsnNeuron::new(PsnParams::init(PsnKind::Full, 32, &mut rng).unwrap());
    assert_eq!(check_conditions_table(&psn, 0).unwrap(), row(false, false, true));
    let masked = PsnNeuron::new(PsnParams::init(PsnKind::Masked { k: 8 }, 32, &mut rng).unwrap());
    assert_eq!(check_conditions_table(&masked, 0).unwrap(), row(false, false, true));
    let sliding = PsnNeuron::new(PsnParams::init(PsnKind::Sliding { k: 8 }, 32, &mut rng).unwrap());
    assert_eq!(check_conditions_table(&sliding, 0).unwrap(), row(true, true, true));
    let dsn = DsnNeuron {
        params: DsnParams::init(3, 4, &mut rng),
    };
    assert_eq!(check_conditions_table(&dsn, 0).unwrap(), row(true, true, true));
}
