use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("faer");
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let m: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(n);

    match which {
        "faer" => {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
            let a = faer::Mat::<f64>::from_fn(n, m, |_, _| rng.gen::<f64>() - 0.5);
            let t = Instant::now();
            let svd = a.thin_svd().unwrap();
            let dt = t.elapsed().as_secs_f64();
            println!(
                "faer thin_svd {}x{}: {:.3} s  (sigma0={:.4})",
                n,
                m,
                dt,
                svd.S()[0]
            );
        }
        "nalgebra" => {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
            let a = nalgebra::DMatrix::<f64>::from_fn(n, m, |_, _| rng.gen::<f64>() - 0.5);
            let t = Instant::now();
            let svd = a.svd(true, true);
            let dt = t.elapsed().as_secs_f64();
            println!(
                "nalgebra svd {}x{}: {:.3} s (sigma0={:.4})",
                n, m, dt, svd.singular_values[0]
            );
        }
        _ => eprintln!("unknown probe"),
    }
}
