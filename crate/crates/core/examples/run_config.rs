//! Resolves a layered run configuration and prints its effective values and
//! hash, then runs two of the invariant suites.
use camrl::cli::verify::{run_named, VerifyOps};
use camrl::cli::{apply_config_text, RunSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("camrl_config_example");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("base.cfg"), "train.rl_episodes = 200\nmamba.d_model = 32\n")?;

    let mut settings = RunSettings::default();
    let text =
        "include = base.cfg\n# override one value from the include\ntrain.rl_episodes = 400\nnet.kind = LSTMRL\n";
    apply_config_text(&mut settings, text, &dir.join("run.cfg"))?;
    settings.validate()?;
    for (k, v) in settings.entries() {
        println!("{k} = {v}");
    }
    println!("config hash {}", settings.hash());
    println!("default hash {}", RunSettings::default().hash());

    for suite in ["zoh_closed_form", "reward_transcription"] {
        println!("{}", run_named(suite, &VerifyOps::default(), settings.seed)?.line());
    }
    Ok(())
}
