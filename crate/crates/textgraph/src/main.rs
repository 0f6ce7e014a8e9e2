use clap::Parser;

use textgraph::cli;

fn main() {
    let parsed = cli::Cli::parse();
    if let Err(err) = cli::run(parsed) {
        // Machine-readable error object on stderr, nonzero exit.
        let obj = serde_json::json!({
            "error": { "kind": err.kind(), "message": err.to_string() }
        });
        eprintln!("{obj}");
        std::process::exit(1);
    }
}
