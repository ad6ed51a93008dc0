fn main() {
    pathweaver::cli_main();
}
