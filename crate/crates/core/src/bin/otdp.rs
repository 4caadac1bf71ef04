use std::io::Write;

fn main() {
    let env_grid = std::env::var(otdp::cli::GRID_CAP_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = otdp::cli::run(std::env::args_os(), env_grid.as_deref(), &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    std::process::exit(code);
}
