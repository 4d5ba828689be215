use nvf_core::geom::{fixtures, sample_surface};
use nvf_core::model::{ModelConfig, VectorFieldModel};
use nvf_core::train::{held_out_l1, train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let steps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(8);
    let small = args.get(3).map(|s| s == "small").unwrap_or(true);

    let config = TrainConfig {
        epochs,
        steps_per_epoch: steps,
        clouds_per_step: 1,
        queries_per_cloud: 512,
        cloud_points: 2048,
        query_pool_per_mesh: 16384,
        seed: 0,
        ..TrainConfig::default()
    };
    let mcfg = if small { ModelConfig::small() } else { ModelConfig::default() };
    let mut model: VectorFieldModel<f32> = VectorFieldModel::init(mcfg, 0).unwrap();
    let mesh = fixtures::sphere(64, 32);
    let t0 = std::time::Instant::now();
    let records = train(&mut model, std::slice::from_ref(&mesh), &config).unwrap();
    let train_time = t0.elapsed().as_secs_f64();

    for r in records.iter().step_by((epochs / 10).max(1)) {
        println!(
            "epoch {:3}  disp {:.5}  commit {:.4}  perp {:.1}  {:.2}s",
            r.epoch, r.displacement_loss, r.commitment_loss, r.perplexity, r.wall_clock_s
        );
    }
    let cloud = sample_surface(&mesh, 2048, 0).unwrap();
    let err = held_out_l1(&model, &mesh, &cloud, 4096, 42, &config).unwrap();
    println!("train {:.1}s  held-out mean L1: {:.5}", train_time, err);
}
