from mcp.server.fastmcp import FastMCP

from power_tools import register_power_tools
from trial_power.settings import configure_logging

# Initialize FastMCP server
mcp = FastMCP("trial power tools", "0.1.0")

register_power_tools(mcp)

if __name__ == "__main__":
    configure_logging()
    mcp.run(transport='stdio')
