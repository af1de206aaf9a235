import { mountConsole } from "./app.js";

// same-origin by default; override with ?gateway=http://host:port for
// a console served from a separate static host
const params = new URLSearchParams(window.location.search);
mountConsole(document.getElementById("app")!, {
  baseUrl: params.get("gateway") ?? "",
});
