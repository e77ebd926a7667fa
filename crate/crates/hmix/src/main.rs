fn main() {
    std::process::exit(hmix::dispatch(std::env::args_os()));
}
