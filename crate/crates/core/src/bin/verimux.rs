fn main() {
    let code = verimux::orchestrator::cli_main(std::env::args().collect(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
