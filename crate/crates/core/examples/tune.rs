// Temporary tuning harness; removed before release.

use std::time::Instant;

use ncmap_core::features::FeatureMap;
use ncmap_core::field::{evaluate_fit_fidelity, fit, HashEncodingConfig, MlpConfig, TrainConfig};
use ncmap_core::geometry::make_icosphere;
use ncmap_core::io::{make_perturbation, synth_channel};
use ncmap_core::registration::{brute_force_oracle, nc_reg, FeatureField, RegConfig};
use ncmap_core::rotation::{dist_r, sample_rotation, Rotation, RotationSampling};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let level = 4u32;
    let mesh = make_icosphere(level);
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let sulc = synth_channel(&mesh, 4, &mut rng);
    let curv = synth_channel(&mesh, 12, &mut rng);
    let feat = FeatureMap::from_channels(&[sulc, curv], &["sulc", "curv"]).unwrap();

    let enc = HashEncodingConfig::default();
    let mlp = MlpConfig::with_output(2);
    let train = TrainConfig {
        iterations: 3000,
        seed: 7,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let (map, trace) = fit(&mesh, &feat, &enc, &mlp, &train).unwrap();
    let fit_time = t0.elapsed().as_secs_f64();
    println!(
        "fit: {fit_time:.1}s, loss first {:.4} last {:.6}",
        trace[0],
        trace.last().unwrap()
    );

    let t0 = Instant::now();
    let eval_mesh = make_icosphere(5);
    let regs = evaluate_fit_fidelity(&map, &eval_mesh, &mesh, &feat).unwrap();
    println!("fidelity eval: {:.1}s", t0.elapsed().as_secs_f64());
    for (c, r) in regs.iter().enumerate() {
        println!(
            "  ch{c}: beta {:.4} eps {:.4} r2 {:.5}",
            r.slope, r.intercept, r.r_squared
        );
    }

    let moving = FeatureField::neural(map);

    // Perturbed trials.
    let cfg = RegConfig {
        points: 1024,
        val_points: 512,
        restarts: 100,
        ..RegConfig::default()
    };
    let mut times = Vec::new();
    let mut errors = Vec::new();
    for seed in 0..10u64 {
        let pert = make_perturbation(seed).rotation;
        let fixed_mesh = ncmap_core::geometry::SphericalMesh::new(
            mesh.vertices().iter().map(|v| pert.apply(v)).collect(),
            mesh.faces().to_vec(),
        )
        .unwrap();
        let fixed = FeatureField::mesh(fixed_mesh, feat.clone()).unwrap();
        let mut c = cfg;
        c.seed = seed;
        let t0 = Instant::now();
        let res = nc_reg(&fixed, &moving, &c).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let err = dist_r(&res.best_rotation, &pert.inverse()).to_degrees();
        let steps: usize = res.restarts.iter().map(|r| r.steps).sum();
        println!(
            "seed {seed}: err {err:.4} deg, {dt:.1}s, total steps {steps}, best val {:.5}",
            res.best_val_loss
        );
        times.push(dt);
        errors.push(err);
    }
    println!(
        "perturbed: max err {:.4} deg, mean time {:.1}s",
        errors.iter().cloned().fold(0.0, f64::max),
        times.iter().sum::<f64>() / times.len() as f64
    );

    // Haar (full-range) trials.
    for seed in 100..103u64 {
        let mut hr = ChaCha8Rng::seed_from_u64(seed);
        let pert = sample_rotation(RotationSampling::Haar, &mut hr);
        let fixed_mesh = ncmap_core::geometry::SphericalMesh::new(
            mesh.vertices().iter().map(|v| pert.apply(v)).collect(),
            mesh.faces().to_vec(),
        )
        .unwrap();
        let fixed = FeatureField::mesh(fixed_mesh, feat.clone()).unwrap();
        let mut c = cfg;
        c.seed = seed;
        let t0 = Instant::now();
        let res = nc_reg(&fixed, &moving, &c).unwrap();
        let angle = 2.0 * dist_r(&pert, &Rotation::identity()).to_degrees();
        let err = dist_r(&res.best_rotation, &pert.inverse()).to_degrees();
        println!(
            "haar seed {seed}: angle {angle:.1} deg err {err:.4} deg, {:.1}s",
            t0.elapsed().as_secs_f64()
        );
    }

    // Oracle cost for one trial.
    let pert = make_perturbation(0).rotation;
    let fixed_mesh = ncmap_core::geometry::SphericalMesh::new(
        mesh.vertices().iter().map(|v| pert.apply(v)).collect(),
        mesh.faces().to_vec(),
    )
    .unwrap();
    let fixed = FeatureField::mesh(fixed_mesh, feat.clone()).unwrap();
    let mut prng = ChaCha8Rng::seed_from_u64(0);
    let pts = ncmap_core::geometry::sample_sphere_uniform(
        1024,
        ncmap_core::geometry::SphereSampling::Random,
        &mut prng,
    );
    let t0 = Instant::now();
    let (orot, oe) = brute_force_oracle(&fixed, &moving, 10.0, &pts).unwrap();
    println!(
        "oracle 10deg/1024pts: {:.1}s, best energy {oe:.5}, dist to truth {:.2} deg",
        t0.elapsed().as_secs_f64(),
        dist_r(&orot, &pert.inverse()).to_degrees()
    );
}
