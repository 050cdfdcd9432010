# Este archivo permite que Django reconozca esta carpeta como un módulo de Python
