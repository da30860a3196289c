use clap::Parser;
use clxai_cli::{exit_code, run, Cli, EXIT_INVALID, EXIT_OK};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = run(&cli);
    match &result {
        Ok(report) if cli.json => println!("{}", serde_json::to_string_pretty(&report.json).expect("json")),
        Ok(report) => println!("{}", report.text),
        Err(e) => eprintln!("error: {e:#}"),
    }
    std::process::exit(exit_code(&result));
}
