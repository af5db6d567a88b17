mod config;
mod exec;

fn main() {
    std::process::exit(exec::run());
}
