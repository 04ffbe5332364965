//! Regenerates the desk-scale corpora shipped under `data/`.
//!
//! News sentences come from the templated proposition generator; tweets are
//! those sentences pushed through the corruption pipeline H with a small
//! hashtag pool. Everything is seeded, so reruns reproduce the files.
//!
//! Usage: cargo run -p stylefuse-cli --example gen_data [out_dir]

use std::path::PathBuf;

use stylefuse::corruptor::{CorruptionSpec, Corruptor};
use stylefuse::propositions::{clause_lines, generate_templated};

fn main() -> std::io::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data".to_string())
        .into();
    std::fs::create_dir_all(&out)?;

    let news: Vec<String> = generate_templated(500, 42)
        .unwrap()
        .into_iter()
        .map(|r| r.sentence)
        .collect();
    std::fs::write(out.join("news.txt"), news.join("\n") + "\n")?;

    let tweet_sources: Vec<String> = generate_templated(500, 43)
        .unwrap()
        .into_iter()
        .map(|r| r.sentence)
        .collect();
    let spec = CorruptionSpec {
        hashtag_pool: vec![
            "#breaking".to_string(),
            "#update".to_string(),
            "#rescue".to_string(),
            "#floodalert".to_string(),
            "#quake".to_string(),
        ],
        seed: 44,
        ..CorruptionSpec::default()
    };
    let corruptor = Corruptor::new(spec);
    let tweets: Vec<String> = tweet_sources
        .iter()
        .enumerate()
        .map(|(i, s)| corruptor.corrupt(s, i as u64))
        .collect();
    std::fs::write(out.join("tweets.txt"), tweets.join("\n") + "\n")?;

    let clauses = generate_templated(350, 7).unwrap();
    std::fs::write(out.join("merge_clauses.tsv"), clause_lines(&clauses))?;

    // Two four-tweet groups for the end-to-end demo.
    let example = "\
strong winds batter the coastal town as cyclone nears #floodalert
rescue teams reached hundreds of residents after floodwaters blocked the main bridge
thousands flee the village as the cyclone destroyed dozens of homes
#breaking coast guards rescued a school bus near the coast

aid workers reached the relief camp in eastern india
the earthquake damaged the main bridge after midnight #quake
local officials evacuated the hospital in the valley
floodwaters buried the village on friday
";
    std::fs::write(out.join("example_tweets.txt"), example)?;

    eprintln!("wrote corpora to {}", out.display());
    Ok(())
}
