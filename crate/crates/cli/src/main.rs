use clap::Parser;
use htf_cli::args::Cli;
use htf_cli::{run, workers_from_env, Status};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            let detail = e.kind().to_string();
            println!("{}", Status::Error.line(Some(&detail)));
            std::process::exit(Status::Error.exit_code());
        }
    };
    let result = workers_from_env().and_then(|w| {
        if let Some(n) = w {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        run(&cli)
    });
    let status = match result {
        Ok(warnings) if warnings.is_empty() => {
            println!("{}", Status::Ok.line(None));
            Status::Ok
        }
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", Status::Warning.line(Some(&warnings.join("; "))));
            Status::Warning
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            println!("{}", Status::Error.line(Some(&format!("{e:#}"))));
            Status::Error
        }
    };
    std::process::exit(status.exit_code());
}
