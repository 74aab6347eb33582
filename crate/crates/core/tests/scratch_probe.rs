use dcbc_core::data::{assemble_m, collect_trajectory, default_excitation};
use dcbc_core::model::*;
use dcbc_core::synth::{self};
use std::time::Instant;

fn load(path: &str) -> AugmentedModel {
    let text = std::fs::read_to_string(path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let p = &v["plant"];
    let n = p["n"].as_u64().unwrap() as usize;
    let m = p["m"].as_u64().unwrap() as usize;
    let dict: Vec<String> = p["dictionary"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect();
    let dictionary = dcbc_core::expr::Dictionary::parse(n, m, &dict).unwrap();
    let a_rows: Vec<Vec<f64>> = p["a_matrix"].as_array().unwrap().iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()).collect();
    let flat: Vec<f64> = a_rows.iter().flatten().copied().collect();
    let a = nalgebra::DMatrix::from_row_slice(n, dictionary.len(), &flat);
    let boxr = |b: &serde_json::Value| BoxRegion::new(
        b["lower"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect(),
        b["upper"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()).unwrap();
    let regions = RegionSpec::new(
        boxr(&p["state_box"]),
        p["initial_boxes"].as_array().unwrap().iter().map(boxr).collect(),
        p["unsafe_boxes"].as_array().unwrap().iter().map(boxr).collect(),
    ).unwrap();
    let bounds: Vec<f64> = p["input_bounds"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let inputs = InputConstraints::from_box_bounds(&bounds).unwrap();
    let plant = PlantModel::new(dictionary, a, regions, inputs).unwrap();
    augment(&plant, v["augmentation"]["eps1"].as_f64().unwrap(), v["augmentation"]["eps2"].as_f64().unwrap()).unwrap()
}

#[test]
fn probe_reshape_case2() {
    let aug = load("../../configs/case2.json");
    let exc = default_excitation(&aug).unwrap();
    let traj = collect_trajectory(&aug, 100, &exc, 7, None).unwrap();
    let dm = assemble_m(&traj, &aug.aug_dictionary).unwrap();
    let z2 = synth::solve_z2(&dm, &traj.shifted).unwrap();
    let g_mat = &traj.shifted * &z2;
    let kmax = synth::solve_barrier(&dm, &traj.shifted, 0.01).unwrap();
    let (eta0, gamma0) = synth::compute_levels(&kmax.p, &aug.initial_boxes, &aug.unsafe_boxes).unwrap();
    println!("start: eta={eta0:.3} gamma={gamma0:.3} gap={:.3}", gamma0-eta0);
    let t0 = Instant::now();
    match synth::improve_levels_fixed_controller(&dm, &traj.shifted, 0.01, &kmax, &aug.initial_boxes, &aug.unsafe_boxes) {
        Ok(b) => {
            let (eta, gamma) = synth::compute_levels(&b.p, &aug.initial_boxes, &aug.unsafe_boxes).unwrap();
            let direct = synth::compute_ca_direct(&b.p, &g_mat, &aug.aug_dictionary, &aug.state_box, 0.01, 51, false).unwrap();
            println!("reshaped: eta={eta:.3} gamma={gamma:.3} gap={:.3} ca_direct={:.5} T={:?} lmi={:.2e} dt={:?}",
                gamma-eta, direct.c_a, synth::horizon(eta, gamma, direct.c_a).map(|h| h.to_string()), b.lmi_min_eig, t0.elapsed());
        }
        Err(e) => println!("reshape ERR: {e} dt={:?}", t0.elapsed()),
    }
}

#[test]
fn probe_levelopt_case2_disabled() { if true { return; }
    let aug = load("../../configs/case2.json");
    let exc = default_excitation(&aug).unwrap();
    let traj = collect_trajectory(&aug, 100, &exc, 7, None).unwrap();
    let dm = assemble_m(&traj, &aug.aug_dictionary).unwrap();
    let z2 = synth::solve_z2(&dm, &traj.shifted).unwrap();
    let g_mat = &traj.shifted * &z2;
    let inner = synth::compute_inner_max(&g_mat, &aug.aug_dictionary, &aug.state_box, 51, false).unwrap();
    let a = synth::solve_barrier(&dm, &traj.shifted, 0.01).unwrap();
    let cap = 1.0 / 0.0426; // lambda_max of anchor
    for rho in [64.0, 16.0, 4.0, 2.0] {
        let t0 = Instant::now();
        match synth::solve_level_optimized(&dm, &traj.shifted, 0.01, &a.p, &aug.initial_boxes, &aug.unsafe_boxes, rho, cap) {
            Ok(b) => {
                let ca = synth::finish_ca(&b.p, 0.01, inner.clone());
                let (eta, gamma) = synth::compute_levels(&b.p, &aug.initial_boxes, &aug.unsafe_boxes).unwrap();
                println!("rho={rho:<5} margin={:.3e} ca={:.5} eta={eta:.3} gamma={gamma:.3} T={:?} dt={:?}",
                    b.lmi_min_eig, ca.c_a, synth::horizon(eta, gamma, ca.c_a).map(|h| h.to_string()), t0.elapsed());
            }
            Err(e) => println!("rho={rho:<5} ERR {e} dt={:?}", t0.elapsed()),
        }
    }
}

