use anncad::phantom::{generate_phantom, PhantomConfig};
use anncad::preprocess::{extract_voi, mip_project, sample_transform, AugmentConfig};
use anncad::rng::substream;
use std::time::Instant;

fn main() {
    let (vol, _) = generate_phantom(1, &PhantomConfig::default()).unwrap();
    let mut rng = substream(0, "bench", &[]);
    let cfg = AugmentConfig::default();
    let t0 = Instant::now();
    let n = 20;
    let mut sink = 0f32;
    for _ in 0..n {
        let t = sample_transform(&mut rng, &cfg);
        let block = extract_voi(&vol, [32, 32, 32], &t).unwrap();
        let patch = mip_project(&block);
        sink += patch.data[0];
    }
    let dt = t0.elapsed().as_secs_f64() / n as f64;
    let t = sample_transform(&mut rng, &cfg);
    let t2 = Instant::now();
    let block = extract_voi(&vol, [32, 32, 32], &t).unwrap();
    let dt_voi = t2.elapsed().as_secs_f64();
    let t3 = Instant::now();
    let patch = mip_project(&block);
    let dt_mip = t3.elapsed().as_secs_f64();
    sink += patch.data[1];
    println!("render total {:.1} ms/patch (voi {:.1} ms, mip {:.1} ms)  [{sink}]", dt * 1e3, dt_voi * 1e3, dt_mip * 1e3);
    let t4 = Instant::now();
    let (v2, _) = generate_phantom(2, &PhantomConfig::default()).unwrap();
    println!("phantom gen {:.1} ms [{}]", t4.elapsed().as_secs_f64() * 1e3, v2.at(1, 1, 1));
}
