# pipeline/stage_manager.py

from typing import Any, Callable, Dict, Optional

from common.errors import ScdgnError


class StageManager:
    """
    Registro y ejecución controlada de las etapas del pipeline.
    Ninguna excepción sale de `execute`: el resultado es siempre un dict.
    """

    def __init__(self, debug: bool = False):
        self.stages: Dict[str, Dict[str, Any]] = {}
        self.debug = debug

    # --------------------------------------------------------
    # Registro de etapas
    # --------------------------------------------------------
    def register(
        self,
        name: str,
        func: Callable,
        artifact: Optional[str] = None,
        required_keys: Optional[list] = None,
        description: str = "",
    ):
        """
        - name: identificador de la etapa (prepare, cluster, graphs, train, evaluate)
        - func: callable Python
        - artifact: fichero que produce; con --resume la etapa se salta si existe
        - required_keys: claves mínimas esperadas en args
        """

        if not callable(func):
            raise ValueError(f"Stage '{name}' is not callable.")

        self.stages[name] = {
            "func": func,
            "artifact": artifact,
            "required_keys": required_keys or [],
            "description": description,
        }

        if self.debug:
            print(f"[PIPELINE] registered stage '{name}'")

    # --------------------------------------------------------
    # Ejecución
    # --------------------------------------------------------
    def execute(self, name: str, args: Optional[dict] = None) -> Dict[str, Any]:
        args = args or {}
        if self.debug:
            print(f"[PIPELINE] running stage: {name}")

        if name not in self.stages:
            return {
                "ok": False,
                "stage": name,
                "error_type": "execution_error",
                "message": f"Unknown stage: {name}",
            }

        stage = self.stages[name]

        missing = [k for k in stage["required_keys"] if k not in args]
        if missing:
            return {
                "ok": False,
                "stage": name,
                "error_type": "config_error",
                "message": f"Missing arguments: {missing}",
            }

        try:
            result = stage["func"](**args)
            return {"ok": True, "stage": name, "result": result}

        except ScdgnError as e:
            if self.debug:
                print(f"[PIPELINE] stage '{name}' failed: {e!r}")
            return {
                "ok": False,
                "stage": name,
                "error_type": e.error_type,
                "message": str(e),
            }

        except Exception as e:
            # anything else is an execution error, still named by stage
            if self.debug:
                print(f"[PIPELINE] stage '{name}' raised: {e!r}")
            return {
                "ok": False,
                "stage": name,
                "error_type": "execution_error",
                "message": f"{type(e).__name__}: {e}",
            }

    def artifact(self, name: str) -> Optional[str]:
        return self.stages[name]["artifact"]

    def list_stages(self):
        return {
            name: {
                "artifact": s["artifact"],
                "required_keys": s["required_keys"],
                "description": s["description"],
            }
            for name, s in self.stages.items()
        }
