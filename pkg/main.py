# main.py
"""
fraclab 实验服务（可选）

GET  /             存活检查
GET  /health       配置与统计
GET  /experiments  可用实验及依赖状态
POST /run          运行一次实验，返回报告行与元数据
WS   /ws/sweep     逐行推送扫描结果，最后推送摘要
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from typing import Any, Dict

from fastapi import Body, FastAPI, WebSocket
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from config import Config
from errors import FracLabError, ValidationError, exit_code_for
from lab_factory import LabFactory
from reporting import jsonable

app = FastAPI(title="fraclab Lab Server")

# 如需跨域调试
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_headers=["*"],
    allow_methods=["*"],
)

_service_stats = {
    "start_time": time.time(),
    "total_runs": 0,
    "total_rows_streamed": 0,
    "validation_errors": 0,
    "numerical_errors": 0,
    "other_errors": 0,
}
_service_stats_lock = threading.Lock()


def _bump(key: str, amount: int = 1) -> None:
    with _service_stats_lock:
        _service_stats[key] += amount


def _status_for(error: Exception) -> int:
    """参数错误 → 422，数值失败及其它 → 500"""
    code = exit_code_for(error)
    if code == 2:
        _bump("validation_errors")
        return 422
    _bump("numerical_errors" if code == 3 else "other_errors")
    return 500


def _error_body(error: Exception) -> Dict[str, Any]:
    return {"error": type(error).__name__, "detail": str(error), "exit_code": exit_code_for(error)}


def _run_payload(payload: Dict[str, Any]) -> Dict[str, Any]:
    experiment = LabFactory.create_experiment(payload)
    result = experiment.run()
    _bump("total_runs")
    return jsonable(result.to_payload())


@app.get("/", response_class=PlainTextResponse)
def root():
    return "OK"


@app.get("/health")
def health():
    validation = Config.validate_config()
    with _service_stats_lock:
        stats = dict(_service_stats)
    stats["uptime_s"] = time.time() - stats.pop("start_time")
    return {
        "status": "ok" if validation["valid"] else "degraded",
        "version": Config.VERSION,
        "config": validation,
        "numeric": Config.get_numeric_config(),
        "stats": stats,
    }


@app.get("/experiments")
def experiments():
    return {kind.value: info for kind, info in LabFactory.get_available_experiments().items()}


@app.post("/run")
async def run_experiment(payload: Dict[str, Any] = Body(...)):
    print(f"[Backend] 🧪 /run: {payload.get('experiment')}")
    try:
        body = await asyncio.to_thread(_run_payload, payload)
    except (FracLabError, ValueError, ArithmeticError, MemoryError, ImportError) as e:
        status = _status_for(e)
        print(f"[Backend] ❌ /run 失败 ({status}): {e}")
        return JSONResponse(status_code=status, content=_error_body(e))
    print(f"[Backend] ✅ /run 完成, 用时 {body['wall_time_s']:.2f}s")
    return body


@app.websocket("/ws/sweep")
async def sweep(ws: WebSocket):
    """
    客户端先发一条 JSON 配置；服务端在线程中运行实验，
    每行报告推送 {"type": "row"}，最后推送 {"type": "summary"} 或 {"type": "error"}
    """
    await ws.accept()
    print("[Backend] ✅ WebSocket connection accepted")
    connection_start_time = time.time()
    loop = asyncio.get_running_loop()
    queue: asyncio.Queue = asyncio.Queue()

    def produce(payload: Dict[str, Any]) -> None:
        try:
            experiment = LabFactory.create_experiment(payload)
            for message in experiment.stream_rows():
                loop.call_soon_threadsafe(queue.put_nowait, jsonable(message))
            _bump("total_runs")
        except Exception as e:
            status = _status_for(e)
            loop.call_soon_threadsafe(queue.put_nowait, {"type": "error", "status": status, **_error_body(e)})
        finally:
            loop.call_soon_threadsafe(queue.put_nowait, None)

    try:
        text = await ws.receive_text()
        if text == "PING":
            await ws.send_text("PONG")
            text = await ws.receive_text()
        try:
            payload = json.loads(text)
            if not isinstance(payload, dict):
                raise ValidationError("WebSocket 配置必须是 JSON 对象")
        except (json.JSONDecodeError, ValidationError) as e:
            error = e if isinstance(e, ValidationError) else ValidationError(f"配置不是合法 JSON: {e}")
            await ws.send_text(json.dumps({"type": "error", "status": _status_for(error), **_error_body(error)}))
            return

        producer = loop.run_in_executor(None, produce, payload)
        while True:
            message = await queue.get()
            if message is None:
                break
            if message.get("type") == "row":
                _bump("total_rows_streamed")
            await ws.send_text(json.dumps(message, ensure_ascii=False))
        await producer
    except Exception as e:
        print(f"[Backend] WebSocket error: {e}")
    finally:
        print(f"[Backend] Connection closed after {time.time() - connection_start_time:.1f} seconds")
        try:
            await ws.close()
        except Exception:
            pass


if __name__ == "__main__":
    import uvicorn

    Config.print_config_summary()
    LabFactory.print_experiment_status()
    uvicorn.run(app, host="0.0.0.0", port=8080)
