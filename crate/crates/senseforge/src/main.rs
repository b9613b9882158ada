fn main() { std::process::exit(senseforge::cli::main()) }
