fn main() {
    nmsat::harness::init_logging();
    let code = nmsat::harness::main_with_args(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    std::process::exit(code);
}
