import { Client } from "./api";
import { mount } from "./main";

// Same-origin API: the bundle is served by the backend's --static-dir.
mount(document.getElementById("app")!, new Client(""));
