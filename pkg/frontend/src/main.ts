import { ServiceClient } from "./api";
import { boot } from "./app";
import "./styles.css";

function serviceBaseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("service");
  if (fromQuery) return fromQuery;
  const fromEnv = import.meta.env?.VITE_SERVICE_URL as string | undefined;
  if (fromEnv) return fromEnv;
  return "http://127.0.0.1:8765";
}

const root = document.getElementById("app");
if (root) {
  boot(root, new ServiceClient(serviceBaseUrl()));
}
