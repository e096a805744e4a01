use flowseg::capnet::{NetConfig, NetParams};
use flowseg::solver::SolverConfig;
use flowseg::synthdata::{self, SynthConfig};
use flowseg::trainer::{train_step, TrainConfig};

fn main() {
    for (widths, sample_seed, net_seed) in [
        (vec![4usize, 8], 13u64, 21u64),
        (vec![8, 16], 13, 21),
        (vec![4, 8], 5, 21),
        (vec![4, 8], 13, 7),
        (vec![8, 16], 5, 7),
    ] {
        let scfg = SynthConfig { count: 1, height: 32, width: 32, seed: sample_seed, ..Default::default() };
        let sample = synthdata::generate(&scfg).unwrap().pop().unwrap();
        let cfg = NetConfig { in_channels: 4, down_widths: widths.clone(), out_maps: 9, dropout_rate: 0.0, seed: net_seed };
        let mut params = NetParams::init(&cfg).unwrap();
        let tcfg = TrainConfig { solver: SolverConfig { iterations: 15, ..Default::default() }, ..Default::default() };
        let mut first = 0.0;
        let mut last = 0.0;
        for step in 0..50u64 {
            let reports = train_step(&mut params, &cfg, &sample, &tcfg, step).unwrap();
            let total: f64 = reports.iter().map(|r| r.total).sum();
            if step == 0 { first = total; }
            last = total;
        }
        println!("widths {:?} sseed {} nseed {}: {:.3} -> {:.3} (ratio {:.4})", widths, sample_seed, net_seed, first, last, last / first);
    }
}
