pub mod vi_reference;
