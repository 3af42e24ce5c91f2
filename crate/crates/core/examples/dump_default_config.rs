//! Prints the default run configuration as TOML.

fn main() {
    let config = llmlink_core::RunConfig::default();
    print!("{}", config.to_toml_string().unwrap());
}
