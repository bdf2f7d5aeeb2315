use clap::Parser;
use drscc_cli::{run, Cli, EXIT_INVALID, EXIT_OK};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational = !e.use_stderr();
            let _ = e.print();
            // clap exits 2 on usage errors; 2 is reserved for infeasibility here
            std::process::exit(if informational { EXIT_OK } else { EXIT_INVALID });
        }
    };
    std::process::exit(run(cli));
}
