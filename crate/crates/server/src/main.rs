use clap::Parser;

/// Serve gradual domain osmosis experiments over HTTP/JSON.
#[derive(Parser)]
#[command(name = "gdo-server", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,

    /// Worker threads per job (all cores when omitted).
    #[arg(long)]
    threads: Option<usize>,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind(&args.addr).await?;
    eprintln!("gdo-server listening on http://{}", listener.local_addr()?);
    gdo_server::serve(listener, gdo_server::AppState::new(args.threads)).await
}
