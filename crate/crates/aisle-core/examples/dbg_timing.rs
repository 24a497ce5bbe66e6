use aisle_core::learn::*;
use aisle_core::runner::*;
use aisle_core::scenario::*;
use std::time::Instant;

fn main() {
    let cfg = load_config(default_config_json()).unwrap();
    let sc = cfg.scenario;
    // time expert generation for 200 transitions
    let t0 = Instant::now();
    let starts = random_starts(&sc, 2, 9);
    let expert = generate_expert(&sc, &cfg.solver, &starts, 100).unwrap();
    println!("expert: {} transitions in {:.2?} ({:.1} ms/transition)",
             expert.len(), t0.elapsed(), t0.elapsed().as_secs_f64()*1000.0/expert.len() as f64);

    // time one aisle episode T=100 with an untrained model
    let q = QFunction::new(&sc, 64, 8, 1);
    let t1 = Instant::now();
    let res = run_aisle(&sc, &cfg.solver, &q, 0).unwrap();
    println!("aisle T=100: total_ee={:.4} in {:.2?}", res.total_ee, t1.elapsed());

    let t2 = Instant::now();
    let up = run_upper_bound(&sc, &cfg.solver, 0).unwrap();
    println!("upper T=100: total_ee={:.4} in {:.2?}", up.total_ee, t2.elapsed());

    let t3 = Instant::now();
    let fsd = run_fsd(&sc, &cfg.solver, &q, 0).unwrap();
    println!("fsd T=100: total_ee={:.4} in {:.2?}", fsd.total_ee, t3.elapsed());
}
