//! Builds the minilib fixture and a sample configuration:
//! `cargo run -p rcxforge --example make_fixture -- <dir> [seed]`

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().ok_or("usage: make_fixture <dir> [seed]")?;
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let (fixture, config) = rcxforge::fixture::build_with_config(std::path::Path::new(&dir), seed)?;
    println!("repository {} at {}", fixture.repo.display(), fixture.head);
    println!("config {}", config.display());
    Ok(())
}
