"""Serve the analysis MCP server over SSE or stdio."""

import logging
from dataclasses import dataclass
from typing import Literal

import uvicorn
from mcp.server import Server
from mcp.server.sse import SseServerTransport
from mcp.server.stdio import stdio_server
from starlette.applications import Starlette
from starlette.middleware import Middleware
from starlette.middleware.cors import CORSMiddleware
from starlette.requests import Request
from starlette.responses import JSONResponse, Response
from starlette.routing import Mount, Route

from . import __version__
from .server import SERVER_NAME, TOOLS, create_analysis_server

logger = logging.getLogger(__name__)


@dataclass
class SseServerSettings:
    """Settings for the server."""

    bind_host: str
    port: int
    allow_origins: list[str] | None = None
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    sse_path: str = "/sse"
    messages_path: str = "/messages/"


def create_starlette_app(
    settings: SseServerSettings,
    mcp_server: Server | None = None,
) -> Starlette:
    """HTTP app for the analysis tools.

    Routes: the SSE stream at ``settings.sse_path``, client messages under
    ``settings.messages_path``, and a JSON index of the tools at ``/tools``.
    """
    analysis = mcp_server or create_analysis_server()
    transport = SseServerTransport(settings.messages_path)

    async def stream(request: Request) -> Response:
        logger.debug("SSE session opened from %s", request.client)
        async with transport.connect_sse(
            request.scope,
            request.receive,
            request._send,  # noqa: SLF001
        ) as (read_stream, write_stream):
            await analysis.run(read_stream, write_stream, analysis.create_initialization_options())
        return Response()

    async def tool_index(_: Request) -> JSONResponse:
        return JSONResponse(
            {"server": SERVER_NAME, "version": __version__, "tools": [t.name for t in TOOLS]},
        )

    cors = (
        []
        if settings.allow_origins is None
        else [
            Middleware(
                CORSMiddleware,
                allow_origins=settings.allow_origins,
                allow_methods=["GET", "POST"],
                allow_headers=["*"],
            ),
        ]
    )
    return Starlette(
        debug=settings.log_level == "DEBUG",
        middleware=cors,
        routes=[
            Route(settings.sse_path, endpoint=stream),
            Route("/tools", endpoint=tool_index),
            Mount(settings.messages_path, app=transport.handle_post_message),
        ],
    )


async def run_sse_server(sse_settings: SseServerSettings) -> None:
    """Expose the analysis tools on an SSE endpoint."""
    config = uvicorn.Config(
        create_starlette_app(sse_settings),
        host=sse_settings.bind_host,
        port=sse_settings.port,
        log_level=sse_settings.log_level.lower(),
    )
    logger.info(
        "Analysis tools on http://%s:%d%s",
        sse_settings.bind_host,
        sse_settings.port,
        sse_settings.sse_path,
    )
    await uvicorn.Server(config).serve()


async def run_stdio_server() -> None:
    """Expose the analysis tools on stdin/stdout."""
    app = create_analysis_server()
    async with stdio_server() as (read_stream, write_stream):
        await app.run(read_stream, write_stream, app.create_initialization_options())
