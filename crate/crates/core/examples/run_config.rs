//! Drives the batch front end from a JSON run configuration, writing the
//! sweep table and a stability report into a temporary directory.

use pklab::cli::{run, Command, RunConfig};

fn main() -> pklab::Result<()> {
    let dir = std::env::temp_dir().join("pklab-run-config-example");
    let sweep: RunConfig = serde_json::from_str(&format!(
        r#"{{"command": "sweep", "family": "hermite6", "deltas": [0.008, 0.002, 0.004],
            "dim": 2, "degree": 4, "outputs": ["{}"]}}"#,
        dir.join("sweep.csv").display()
    ))
    .expect("config parses");
    let out = run(&sweep)?;
    println!("wrote {:?} (status {})\n{}", out.written, out.status, out.body);

    let stability = RunConfig {
        command: Command::Stability,
        measure: Some("product(hermite6(delta=0.004) x 2)".into()),
        outputs: vec![dir.join("stability.json")],
        ..RunConfig::default()
    };
    let out = run(&stability)?;
    println!("wrote {:?}\n{}", out.written, out.body);
    Ok(())
}
