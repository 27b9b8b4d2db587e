## import standard libraries
import logging
from contextlib import asynccontextmanager
from typing import Any, AsyncIterator, Dict

## pip module imports
import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import Response
from starlette.concurrency import run_in_threadpool

# import local files
from schemas.ContextCodec import ContextCodec
from schemas.Errors import CtxMeshError, MalformedJson
from services.WireService import WireService
from utils import Logger

_JSON = "application/json"

def _reply(status:int, payload:Dict[str, Any]) -> Response:
    return Response(content=ContextCodec.CanonicalBytes(payload), status_code=status, media_type=_JSON)

def BuildApp(service:WireService) -> FastAPI:
    """Mount a service's route table on FastAPI.

    Every route is a POST with a canonical JSON body. Typed failures come back as
    HTTP 400 with {"error", "detail"}; anything else is a 500.
    """
    @asynccontextmanager
    async def lifespan(_app:FastAPI) -> AsyncIterator[None]:
        yield
        service.Shutdown()

    app = FastAPI(title=f"ctxmesh {service.node_id}", docs_url=None, redoc_url=None, openapi_url=None, lifespan=lifespan)

    @app.post("/{path:path}")
    async def dispatch(path:str, request:Request) -> Response:
        raw = await request.body()
        try:
            body = ContextCodec.ParseJson(raw) if raw else {}
            if not isinstance(body, dict):
                raise MalformedJson("request body must be a JSON object")
            # handlers block on outgoing calls, so they run off the event loop
            result = await run_in_threadpool(service.Handle, f"/{path}", body, dict(request.headers))
        except CtxMeshError as err:
            Logger.Log(f"{service.node_id}: /{path} rejected: {err}", logging.INFO)
            return _reply(400, err.ToWire())
        except Exception as err:
            Logger.Log(f"{service.node_id}: /{path} failed: {type(err).__name__} {err}", logging.ERROR)
            return _reply(500, {"error": "InternalError", "detail": str(err)})
        return _reply(200, result)

    return app

def Serve(service:WireService, host:str, port:int, log_level:str = "warning") -> None:
    Logger.Log(f"{service.node_id} listening on http://{host}:{port}", logging.INFO)
    uvicorn.run(BuildApp(service), host=host, port=port, log_level=log_level)
