//! Generate the synthetic two-class benchmark dataset so the CLI pipeline
//! can be exercised without any external data.
//!
//! ```text
//! cargo run --release -p facecut-core --example gen_synthetic -- <out-dir> [n-per-class] [seed]
//! ```

use facecut_core::synthetic::{generate_dataset, SyntheticSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(out_dir) = args.next() else {
        eprintln!("usage: gen_synthetic <out-dir> [n-per-class] [seed]");
        std::process::exit(2);
    };
    let n_per_class = args
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(200usize);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7u64);
    let spec = SyntheticSpec {
        n_per_class,
        side: 64,
        seed,
    };
    match generate_dataset(&spec, std::path::Path::new(&out_dir)) {
        Ok(samples) => eprintln!(
            "wrote {} images (+ sidecars, meta.csv) under {out_dir}",
            samples.len()
        ),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
