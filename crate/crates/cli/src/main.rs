use clap::Parser;
use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("TELEOP_LOG", "warn")).init();
    let cli = teleop_cli::Cli::parse();
    let stdout = std::io::stdout();
    let code = teleop_cli::execute(cli, &mut stdout.lock());
    std::process::exit(code);
}
