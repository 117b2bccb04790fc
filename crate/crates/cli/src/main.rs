fn main() {
    std::process::exit(homing_bench::run(std::env::args_os()));
}
